#include "rawnet/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <tuple>

#include "rawnet/errors.hpp"

namespace rawnet {

using data::DomainCap;
using data::Role;
using nlohmann::json;

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::in_domain: return "in_domain";
    case Protocol::cross_domain: return "cross_domain";
    case Protocol::triple_domain: return "triple_domain";
    case Protocol::cross_augmented: return "cross_augmented";
    case Protocol::triple_augmented: return "triple_augmented";
    case Protocol::sanity: return "sanity";
    case Protocol::custom: return "custom";
  }
  return "?";
}

Protocol protocol_from_string(const std::string& s) {
  for (Protocol p : {Protocol::in_domain, Protocol::cross_domain, Protocol::triple_domain, Protocol::cross_augmented,
                     Protocol::triple_augmented, Protocol::sanity, Protocol::custom})
    if (to_string(p) == s) return p;
  throw ConfigError("unknown protocol '" + s + "'");
}

namespace {

// Per-class counts at full scale.
struct Caps {
  std::size_t real, fake;
};
constexpr Caps kForTrain{25600, 25600}, kForVal{3200, 3200}, kForTest{3200, 3200};
constexpr Caps kAvsTrain{6400, 6400}, kAvsTest{22616, 25000};
constexpr Caps kCodecTrain{6400, 6400}, kCodecTest{52000, 50000};
// synthetic sanity set: 64 per class split 48/8/8
constexpr Caps kSynTrain{48, 48}, kSynVal{8, 8}, kSynTest{8, 8};

std::size_t scaled(std::size_t n, double scale) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale));
}

void add(ProtocolPlan& plan, const char* domain, Caps c, Role role) {
  plan.mix.caps.push_back({domain, scaled(c.real, plan.scale), scaled(c.fake, plan.scale), role});
}

}  // namespace

ProtocolPlan plan_protocol(Protocol p, double scale, std::uint64_t mix_seed) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("scale must be > 0");
  ProtocolPlan plan;
  plan.protocol = p;
  plan.scale = scale;
  plan.mix.seed = mix_seed;
  const std::vector<std::string> for_only{kDomainFoR};
  const std::vector<std::string> two{kDomainFoR, kDomainAVSpoof};
  const std::vector<std::string> three{kDomainFoR, kDomainAVSpoof, kDomainCodecFake};

  auto add_for = [&] {
    add(plan, kDomainFoR, kForTrain, Role::train);
    add(plan, kDomainFoR, kForVal, Role::val);
    add(plan, kDomainFoR, kForTest, Role::test);
  };
  auto five_tests = [&] {
    plan.test_sets = {{"for", for_only},
                      {"avspoof", {kDomainAVSpoof}},
                      {"codecfake", {kDomainCodecFake}},
                      {"cross", two},
                      {"triple", three}};
  };

  switch (p) {
    case Protocol::in_domain:
      add_for();
      plan.test_sets = {{"for", for_only}};
      plan.required_domains = for_only;
      break;
    case Protocol::cross_domain:
    case Protocol::cross_augmented:
      add_for();
      add(plan, kDomainAVSpoof, kAvsTrain, Role::train);
      add(plan, kDomainAVSpoof, kAvsTest, Role::test);
      add(plan, kDomainCodecFake, kCodecTest, Role::test);
      if (p == Protocol::cross_domain) {
        plan.test_sets = {{"for", for_only}, {"avspoof", {kDomainAVSpoof}}, {"codecfake", {kDomainCodecFake}},
                          {"cross", two}};
      } else {
        five_tests();
        plan.augment = true;
      }
      plan.required_domains = three;
      break;
    case Protocol::triple_domain:
    case Protocol::triple_augmented:
      add_for();
      add(plan, kDomainAVSpoof, kAvsTrain, Role::train);
      add(plan, kDomainAVSpoof, kAvsTest, Role::test);
      add(plan, kDomainCodecFake, kCodecTrain, Role::train);
      add(plan, kDomainCodecFake, kCodecTest, Role::test);
      five_tests();
      plan.augment = p == Protocol::triple_augmented;
      plan.required_domains = three;
      break;
    case Protocol::sanity:
      add(plan, kDomainSynthetic, kSynTrain, Role::train);
      add(plan, kDomainSynthetic, kSynVal, Role::val);
      add(plan, kDomainSynthetic, kSynTest, Role::test);
      plan.test_sets = {{"synthetic", {kDomainSynthetic}}};
      plan.required_domains = {kDomainSynthetic};
      break;
    case Protocol::custom:
      throw ConfigError("the custom protocol takes its caps from the mix section");
  }
  return plan;
}

ProtocolPlan custom_plan(const data::MixSpec& mix) {
  ProtocolPlan plan;
  plan.protocol = Protocol::custom;
  plan.mix = mix;
  std::set<std::string> test_domains, all;
  for (const auto& c : mix.caps) {
    all.insert(c.domain);
    if (c.role == Role::test) test_domains.insert(c.domain);
  }
  for (const auto& d : test_domains) plan.test_sets.push_back({d, {d}});
  plan.required_domains.assign(all.begin(), all.end());
  return plan;
}

ComposedProtocol compose_protocol(const ProtocolPlan& plan, const std::vector<data::ManifestEntry>& pool) {
  std::set<std::string> present;
  for (const auto& e : pool) present.insert(e.domain);
  for (const auto& d : plan.required_domains)
    if (!present.count(d))
      throw ConfigError("protocol " + to_string(plan.protocol) + " needs a manifest with domain '" + d + "'");

  data::Composed c = data::compose_mix(plan.mix, pool);
  ComposedProtocol out;
  out.train = std::move(c.train);
  out.val = std::move(c.val);
  for (const auto& ts : plan.test_sets) {
    std::vector<data::ManifestEntry> entries;
    for (const auto& d : ts.domains)
      for (const auto& e : c.test)
        if (e.domain == d) entries.push_back(e);
    out.tests.emplace_back(ts.name, std::move(entries));
  }
  return out;
}

ProtocolResult run_protocol(const ProtocolPlan& plan, const ComposedProtocol& composed, TrainConfig cfg,
                            const data::ClipSource& source, const EpochCallback& on_epoch) {
  if (plan.augment && !cfg.augment) cfg.augment = augment::AugmentConfig{};
  if (!plan.augment && plan.protocol != Protocol::custom) cfg.augment.reset();
  ProtocolResult result;
  result.training = train(cfg, composed.train, composed.val, source, on_epoch);
  Model model = deserialize_checkpoint(result.training.checkpoint);
  for (const auto& [name, entries] : composed.tests) {
    if (entries.empty()) throw CompositionError("test set '" + name + "' is empty");
    result.tests.push_back({name, evaluate(model, entries, source, cfg.batch_size, &composed.train, cfg.strict)});
  }
  return result;
}

json test_report_json(const std::string& protocol, const std::string& test_set, double scale,
                      const EvalReport& report, const json& config_echo) {
  return {{"protocol", protocol},
          {"test_set", test_set},
          {"scale", scale},
          {"desk_scale", scale != 1.0},
          {"metrics", report_to_json(report)},
          {"config", config_echo}};
}

std::string figure_data_csv(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ArgumentError("report directory '" + dir.string() + "' does not exist");
  std::vector<std::tuple<std::string, std::string, std::string, std::string>> rows;  // config, test_set, f1, eer
  std::vector<fs::path> files;
  for (const auto& de : fs::recursive_directory_iterator(dir))
    if (de.is_regular_file() && de.path().extension() == ".json") files.push_back(de.path());
  std::sort(files.begin(), files.end());
  auto fmt = [](const json& v) -> std::string {
    if (v.is_null()) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v.get<double>());
    return buf;
  };
  for (const auto& f : files) {
    std::ifstream in(f);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("test_set") || !j.contains("protocol") ||
        !j.contains("metrics"))
      continue;
    const json& m = j.at("metrics");
    rows.emplace_back(j.at("protocol").get<std::string>(), j.at("test_set").get<std::string>(),
                      fmt(m.at("fake").at("f1")), fmt(m.at("eer")));
  }
  if (rows.empty()) throw ArgumentError("no report JSON files found under '" + dir.string() + "'");
  std::sort(rows.begin(), rows.end());
  std::string out = "test_set,config,f1_fake,eer\n";
  for (const auto& [config, test_set, f1, eer] : rows) out += test_set + "," + config + "," + f1 + "," + eer + "\n";
  return out;
}

}  // namespace rawnet
