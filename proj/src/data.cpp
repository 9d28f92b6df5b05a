#include "rawnet/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "rawnet/csv.hpp"
#include "rawnet/errors.hpp"
#include "rawnet/log.hpp"
#include "rawnet/metrics.hpp"
#include "rawnet/rng.hpp"

namespace rawnet::data {

namespace fs = std::filesystem;

std::string to_string(Role r) {
  switch (r) {
    case Role::train: return "train";
    case Role::val: return "val";
    case Role::test: return "test";
  }
  return "?";
}

Role role_from_string(const std::string& s) {
  if (s == "train") return Role::train;
  if (s == "val") return Role::val;
  if (s == "test") return Role::test;
  throw ParseError("unknown split '" + s + "' (expected train, val or test)");
}

// ---- manifests ---------------------------------------------------------------

std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  std::size_t n_cols = 0;
  std::vector<ManifestEntry> out;
  std::unordered_map<std::string, std::size_t> seen;
  auto fail = [&](const std::string& msg) { throw ParseError(source + ":" + std::to_string(line_no) + ": " + msg); };

  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = csv::chomp(raw);
    if (line_no == 1) {
      if (line == "path,label,domain") n_cols = 3;
      else if (line == "path,label,domain,split") n_cols = 4;
      else fail("expected header 'path,label,domain[,split]'");
      continue;
    }
    if (line.empty()) continue;
    auto f = csv::split_record(line, line_no);
    if (f.size() != n_cols) fail("expected " + std::to_string(n_cols) + " fields, got " + std::to_string(f.size()));
    ManifestEntry e;
    e.line = line_no;
    e.path = f[0];
    if (e.path.empty()) fail("empty path");
    if (f[1] == "real") e.label = kLabelReal;
    else if (f[1] == "fake") e.label = kLabelFake;
    else fail("unknown label '" + f[1] + "' (expected real or fake)");
    e.domain = f[2];
    if (e.domain.empty()) fail("empty domain");
    if (n_cols == 4 && !f[3].empty()) {
      try {
        e.split = role_from_string(f[3]);
      } catch (const ParseError& err) {
        fail(err.what());
      }
    }
    auto [it, fresh] = seen.emplace(e.path, line_no);
    if (!fresh)
      fail("duplicate path '" + e.path + "' on lines " + std::to_string(it->second) + " and " +
           std::to_string(line_no));
    out.push_back(std::move(e));
  }
  if (line_no == 0) throw ParseError(source + ": empty manifest (missing header)");
  return out;
}

std::vector<ManifestEntry> parse_manifest_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto entries = parse_manifest(ss.str(), path.string());
  const fs::path base = path.parent_path();
  for (auto& e : entries) {
    fs::path p(e.path);
    if (p.is_relative()) e.path = (base / p).lexically_normal().string();
  }
  return entries;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  bool any_split = false;
  for (const auto& e : entries) any_split |= e.split.has_value();
  std::string out = any_split ? "path,label,domain,split\n" : "path,label,domain\n";
  for (const auto& e : entries) {
    out += csv::escape_field(e.path) + "," + label_name(e.label) + "," + csv::escape_field(e.domain);
    if (any_split) out += "," + (e.split ? to_string(*e.split) : std::string());
    out += "\n";
  }
  return out;
}

void write_manifest_file(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write manifest " + path.string());
  out << format_manifest(entries);
}

// ---- splits ------------------------------------------------------------------

Splits stratified_split(const std::vector<ManifestEntry>& entries, const SplitRatios& r, std::uint64_t seed) {
  if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
    throw ArgumentError("split ratios must be non-negative and sum to 1");
  Splits out;
  for (int label : {kLabelReal, kLabelFake}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].label == label) idx.push_back(i);
    if (idx.empty()) throw SplitError("cannot split: no " + label_name(label) + " entries");
    StreamRng rng{seed, 0x73706c6974ULL, static_cast<std::uint64_t>(label)};
    deterministic_shuffle(idx, rng);
    const std::size_t n = idx.size();
    const std::size_t n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(n * r.train)));
    const std::size_t n_val =
        std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(n * r.val)));
    for (std::size_t k = 0; k < n; ++k) {
      auto& dst = k < n_train ? out.train : (k < n_train + n_val ? out.val : out.test);
      dst.push_back(entries[idx[k]]);
    }
  }
  return out;
}

// ---- domain mix ------------------------------------------------------------------

namespace {

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 1099511628211ULL;
  return h;
}

}  // namespace

Composed compose_mix(const MixSpec& spec, const std::vector<ManifestEntry>& pool) {
  // (domain, label) -> shuffled candidate indices
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pool.size(); ++i) groups[{pool[i].domain, pool[i].label}].push_back(i);
  for (auto& [key, idx] : groups) {
    StreamRng rng{spec.seed, fnv1a64(key.first.data(), key.first.size()), static_cast<std::uint64_t>(key.second)};
    deterministic_shuffle(idx, rng);
  }
  std::vector<bool> used(pool.size(), false);
  Composed out;
  for (Role role : {Role::train, Role::val, Role::test}) {
    auto& dst = role == Role::train ? out.train : (role == Role::val ? out.val : out.test);
    for (const auto& cap : spec.caps) {
      if (cap.role != role) continue;
      for (int label : {kLabelReal, kLabelFake}) {
        const std::size_t want = label == kLabelReal ? cap.n_real : cap.n_fake;
        if (want == 0) continue;
        auto it = groups.find({cap.domain, label});
        std::size_t taken = 0;
        if (it != groups.end()) {
          for (std::size_t i : it->second) {
            if (taken == want) break;
            if (used[i] || (pool[i].split && *pool[i].split != role)) continue;
            used[i] = true;
            dst.push_back(pool[i]);
            ++taken;
          }
        }
        if (taken < want)
          throw CompositionError("domain '" + cap.domain + "' has only " + std::to_string(taken) + " " +
                                 label_name(label) + " entries available for " + to_string(role) + ", cap is " +
                                 std::to_string(want));
      }
    }
  }
  verify_disjoint(out);
  return out;
}

void verify_disjoint(const Composed& c) {
  std::unordered_map<std::string, Role> owner;
  for (Role role : {Role::train, Role::val, Role::test}) {
    const auto& v = role == Role::train ? c.train : (role == Role::val ? c.val : c.test);
    for (const auto& e : v) {
      auto [it, fresh] = owner.emplace(e.path, role);
      if (!fresh && it->second != role)
        throw ProtocolViolation("path '" + e.path + "' appears in both " + to_string(it->second) + " and " +
                                to_string(role));
    }
  }
}

void verify_no_overlap(const std::vector<ManifestEntry>& train, const std::vector<ManifestEntry>& evaluated) {
  std::unordered_map<std::string, bool> seen;
  for (const auto& e : train) seen.emplace(e.path, true);
  for (const auto& e : evaluated)
    if (seen.count(e.path)) throw ProtocolViolation("evaluation path '" + e.path + "' was used for training");
}

// ---- clip loading -------------------------------------------------------------------

std::string content_hash(const std::vector<std::uint8_t>& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

FileClipSource::FileClipSource(std::optional<fs::path> cache_dir) : cache_dir_(std::move(cache_dir)) {
  if (cache_dir_) fs::create_directories(*cache_dir_);
}

fs::path FileClipSource::cache_path_for(const std::vector<std::uint8_t>& bytes) const {
  if (!cache_dir_) throw ArgumentError("no cache directory configured");
  return *cache_dir_ / (content_hash(bytes) + ".f32");
}

bool FileClipSource::ensure_cached(const ManifestEntry& e, audio::FixedClip* out) const {
  const auto bytes = audio::read_file_bytes(e.path);
  if (!cache_dir_) {
    if (out) *out = audio::preprocess(bytes);
    return false;
  }
  const fs::path target = cache_path_for(bytes);
  if (fs::exists(target)) {
    try {
      auto clip = audio::read_clip_dump(target);
      if (out) *out = std::move(clip);
      return true;
    } catch (const DecodeError&) {
      log::warn("ignoring corrupt cache file " + target.string());
    }
  }
  auto clip = audio::preprocess(bytes);
  // write-then-rename so concurrent writers never expose a partial file
  std::ostringstream tmp_name;
  tmp_name << target.string() << ".tmp." << std::this_thread::get_id();
  const fs::path tmp = tmp_name.str();
  audio::write_clip_dump(tmp, clip);
  fs::rename(tmp, target);
  if (out) *out = std::move(clip);
  return false;
}

audio::FixedClip FileClipSource::load(const ManifestEntry& e) const {
  audio::FixedClip clip;
  ensure_cached(e, &clip);
  return clip;
}

// ---- batching ------------------------------------------------------------------------

std::vector<std::size_t> batch_sizes(std::size_t n_entries, std::size_t batch_size, bool augment) {
  std::vector<std::size_t> out;
  std::size_t n = augment ? 2 * n_entries : n_entries;
  while (n > 0) {
    out.push_back(std::min(n, batch_size));
    n -= out.back();
  }
  return out;
}

BatchStream::BatchStream(const std::vector<ManifestEntry>& entries, const ClipSource& source, BatchOptions opts)
    : entries_(entries), source_(source), opts_(std::move(opts)) {
  if (opts_.batch_size == 0) throw ArgumentError("batch_size must be > 0");
  if (entries_.empty()) throw ArgumentError("cannot batch an empty entry list");
  if (opts_.augment) opts_.augment->validate();
  const bool aug = opts_.augment.has_value();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    items_.push_back({i, false});
    if (aug) items_.push_back({i, true});
  }
  if (opts_.shuffle) {
    StreamRng rng{opts_.shuffle_seed, opts_.epoch, 0x62617463ULL};
    deterministic_shuffle(items_, rng);
  }
}

std::size_t BatchStream::num_batches() const { return (items_.size() + opts_.batch_size - 1) / opts_.batch_size; }

bool BatchStream::next(Batch& out) {
  while (cursor_ < items_.size()) {
    const std::size_t begin = cursor_;
    const std::size_t n = std::min(opts_.batch_size, items_.size() - begin);
    cursor_ += n;

    std::vector<audio::FixedClip> clips(n);
    std::vector<std::string> errors(n);
    const std::ptrdiff_t sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t s = 0; s < sn; ++s) {
      const Item& it = items_[begin + static_cast<std::size_t>(s)];
      try {
        auto clip = source_.load(entries_[it.entry]);
        if (it.augmented)
          clip = augment::augment_pipeline(clip, *opts_.augment, {opts_.epoch, it.entry});
        clips[static_cast<std::size_t>(s)] = std::move(clip);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(s)] = e.what();
        if (errors[static_cast<std::size_t>(s)].empty()) errors[static_cast<std::size_t>(s)] = "unknown error";
      }
    }

    std::vector<std::size_t> ok;
    for (std::size_t s = 0; s < n; ++s) {
      if (errors[s].empty()) {
        ok.push_back(s);
        continue;
      }
      const auto& path = entries_[items_[begin + s].entry].path;
      if (opts_.strict) throw DecodeError("strict mode: cannot load '" + path + "': " + errors[s]);
      log::warn("skipping '" + path + "': " + errors[s]);
      skipped_.push_back(path);
    }
    if (ok.empty()) continue;

    out.clips = nn::Tensor<float>({ok.size(), 1, audio::kClipLength});
    out.labels.clear();
    out.entry_index.clear();
    out.augmented.clear();
    for (std::size_t k = 0; k < ok.size(); ++k) {
      const Item& it = items_[begin + ok[k]];
      std::copy(clips[ok[k]].samples.begin(), clips[ok[k]].samples.end(),
                out.clips.data.begin() + static_cast<std::ptrdiff_t>(k * audio::kClipLength));
      out.labels.push_back(entries_[it.entry].label);
      out.entry_index.push_back(it.entry);
      out.augmented.push_back(it.augmented);
    }
    return true;
  }
  return false;
}

// ---- synthetic sanity data --------------------------------------------------------------

std::vector<ManifestEntry> write_sanity_dataset(const fs::path& dir, const SanitySpec& spec) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> out;
  const int rate = audio::kModelSampleRate;
  const std::size_t n = audio::kClipLength;
  for (int label : {kLabelReal, kLabelFake}) {
    for (std::size_t i = 0; i < spec.n_per_class; ++i) {
      StreamRng rng{spec.seed, static_cast<std::uint64_t>(label), i, 0x73796e74ULL};
      std::vector<float> x(n);
      if (label == kLabelReal) {
        const double f = rng.uniform(spec.min_hz, spec.max_hz);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = rng.uniform(0.3, 0.9);
        for (std::size_t t = 0; t < n; ++t)
          x[t] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * f * t / rate + phase));
      } else {
        const double sd = rng.uniform(0.1, 0.3);
        for (std::size_t t = 0; t < n; ++t) x[t] = static_cast<float>(std::clamp(sd * rng.normal(), -1.0, 1.0));
      }
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03zu.wav", label == kLabelReal ? "sine" : "noise", i);
      const fs::path p = fs::absolute(dir / name);
      audio::write_wav_file(p, audio::Waveform::from_mono(rate, std::move(x)), audio::SampleFormat::pcm16);
      out.push_back({p.string(), label, spec.domain, std::nullopt, 0});
    }
  }
  return out;
}

}  // namespace rawnet::data
