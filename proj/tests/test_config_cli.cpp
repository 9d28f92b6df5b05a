#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rawnet/audio_io.hpp"
#include "rawnet/errors.hpp"
#include "rawnet/run_config.hpp"
#include "test_util.hpp"

using namespace rawnet;
using nlohmann::json;

namespace {

int run_cli(const std::string& args, std::string* out = nullptr) {
  const std::string cmd = std::string(RAWNET_CLI) + " " + args + " > cli_out.txt 2> cli_err.txt";
  const int status = std::system(cmd.c_str());
  if (out) {
    std::ifstream in("cli_out.txt");
    std::stringstream ss;
    ss << in.rdbuf();
    *out = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("run config defaults and strictness") {
  CHECK_THROWS_WITH_AS(run_config_from_json(json{{"version", 1}}, "/base"), doctest::Contains("mix.caps"),
                       ConfigError);
  const auto c = run_config_from_json(json{{"version", 1}, {"protocol", "sanity"}}, "/base");
  CHECK(c.protocol == Protocol::sanity);
  CHECK(c.train.lr == 1e-4);
  CHECK(c.train.loss.kind == LossKind::focal);
  CHECK(c.train.model.channels == 64);
  CHECK(c.output_dir == "/base/runs/default");

  CHECK_THROWS_WITH_AS(run_config_from_json(json::object(), "/"), doctest::Contains("version"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 2}}, "/"), ConfigError);
  CHECK_THROWS_WITH_AS(run_config_from_json(json{{"version", 1}, {"protocol", "sanity"}, {"train", {{"learning_rate", 1}}}}, "/"),
                       doctest::Contains("train.learning_rate"), ConfigError);
  CHECK_THROWS_WITH_AS(run_config_from_json(json{{"version", 1}, {"protocol", "sanity"}, {"train", {{"lr", "fast"}}}}, "/"),
                       doctest::Contains("train.lr"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 1}, {"protocol", "quadruple"}}, "/"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"version", 1}, {"protocol", "sanity"}, {"train", {{"loss", {{"gamma", -2}}}}}}, "/"), ConfigError);
}

TEST_CASE("run config round trips through its echo") {
  json doc = {{"version", 1},
              {"protocol", "cross_augmented"},
              {"scale", 0.01},
              {"manifests", {"m.csv"}},
              {"train", {{"lr", 0.002}, {"loss", {{"kind", "bce"}}}, {"seeds", {{"init", 5}}}}},
              {"augment", {{"p_apply", 0.3}}}};
  const auto c = run_config_from_json(doc, "/cfg");
  CHECK(c.manifests[0] == "/cfg/m.csv");
  CHECK(c.train.augment->p_apply == 0.3);
  CHECK(c.train.seeds.init == 5);
  const auto echo = run_config_to_json(c);
  const auto again = run_config_from_json(echo, "/elsewhere");
  CHECK(run_config_to_json(again) == echo);
}

TEST_CASE("overrides") {
  json doc = {{"version", 1}};
  apply_override(doc, "train.lr=0.5");
  apply_override(doc, "output_dir=out/x");
  apply_override(doc, "train.loss.kind=bce");
  CHECK(doc["train"]["lr"] == 0.5);
  CHECK(doc["output_dir"] == "out/x");
  CHECK(doc["train"]["loss"]["kind"] == "bce");
  CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), ConfigError);
}

TEST_CASE("cli exit codes") {
  testutil::TempDir dir("cli");
  const auto d = dir.path();
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("train") == 1);  // missing positional
  CHECK(run_cli("frobnicate") == 1);

  write(d / "bad.json", R"({"version": 1, "bogus": 3})");
  CHECK(run_cli("train " + (d / "bad.json").string()) == 1);
  write(d / "broken.json", "{ not json");
  CHECK(run_cli("train " + (d / "broken.json").string()) == 1);

  // data errors
  write(d / "m.csv", "path,label,domain\nmissing.wav,real,for\n");
  CHECK(run_cli("preprocess --manifest " + (d / "m.csv").string() + " --cache " + (d / "c").string() + " --strict") == 2);
  CHECK(run_cli("metrics " + (d / "nope.csv").string()) == 2);
  CHECK(run_cli("infer --checkpoint " + (d / "nope.rnl").string() + " " + (d / "x.wav").string()) == 2);

  // protocol error: in-domain needs a 'for' manifest domain
  write(d / "other.csv", "path,label,domain\na.wav,real,avspoof\n");
  write(d / "proto.json", R"({"version": 1, "protocol": "in_domain", "scale": 0.01, "manifests": ["other.csv"]})");
  CHECK(run_cli("train " + (d / "proto.json").string() + " --dry-run") == 1);
  write(d / "small.csv", "path,label,domain\na.wav,real,for\nb.wav,fake,for\n");
  write(d / "proto2.json", R"({"version": 1, "protocol": "in_domain", "scale": 0.01, "manifests": ["small.csv"]})");
  CHECK(run_cli("train " + (d / "proto2.json").string() + " --dry-run") == 2);

  // scores -> metrics
  write(d / "s.csv", "path,label,score\na,real,0.1\nb,real,0.4\nc,real,0.6\nd,fake,0.5\ne,fake,0.7\nf,fake,0.9\n");
  std::string out;
  CHECK(run_cli("metrics " + (d / "s.csv").string() + " --out " + (d / "r.json").string(), &out) == 0);
  CHECK(out.find("EER 33.3333%") != std::string::npos);
  std::ifstream rj(d / "r.json");
  const auto report = json::parse(rj);
  CHECK(report["eer"].get<double>() == doctest::Approx(1.0 / 3.0));
  CHECK(run_cli("metrics " + (d / "s.csv").string() + " --threshold 2") == 1);

  // preprocess writes cache files and reports hits
  audio::write_wav_file(d / "t.wav", audio::Waveform::from_mono(22050, testutil::sine(220, 22050, 30000)),
                        audio::SampleFormat::pcm16);
  write(d / "ok.csv", "path,label,domain\nt.wav,real,for\n");
  CHECK(run_cli("preprocess --manifest " + (d / "ok.csv").string() + " --cache " + (d / "c").string(), &out) == 0);
  CHECK(json::parse(out)["cache_hits"] == 0);
  CHECK(run_cli("preprocess --manifest " + (d / "ok.csv").string() + " --cache " + (d / "c").string(), &out) == 0);
  CHECK(json::parse(out)["cache_hits"] == 1);
}

TEST_CASE("cli train, eval, infer and leakage guard") {
  testutil::TempDir dir("cli_run");
  const auto d = dir.path();
  REQUIRE(run_cli("synth-sanity --out " + (d / "data").string() + " --n 4 --seed 3") == 0);
  write(d / "run.json", R"({"version": 1, "protocol": "custom", "manifests": ["data/manifest.csv"],
    "output_dir": "out",
    "model": {"channels": 2, "n_res_blocks": 1, "pool_len": 4, "gru_hidden": 2, "fc_hidden": 2},
    "train": {"batch_size": 4, "max_epochs": 1, "max_steps": 1},
    "mix": {"seed": 1, "caps": [{"domain": "synthetic", "n_real": 2, "n_fake": 2, "role": "train"},
                                {"domain": "synthetic", "n_real": 1, "n_fake": 1, "role": "val"},
                                {"domain": "synthetic", "n_real": 1, "n_fake": 1, "role": "test"}]}})");
  REQUIRE(run_cli("train " + (d / "run.json").string()) == 0);
  const auto ckpt = (d / "out" / "checkpoint.rnl").string();
  CHECK(std::filesystem::exists(ckpt));
  CHECK(std::filesystem::exists(d / "out" / "history.csv"));

  std::string out;
  CHECK(run_cli("infer --checkpoint " + ckpt + " " + (d / "data" / "sine_000.wav").string(), &out) == 0);
  const double p = std::stod(out);
  CHECK(p > 0.0);
  CHECK(p < 1.0);

  const auto manifest = (d / "data" / "manifest.csv").string();
  CHECK(run_cli("eval --checkpoint " + ckpt + " --manifest " + manifest + " --out " + (d / "ev").string()) == 0);
  CHECK(std::filesystem::exists(d / "ev" / "scores.csv"));
  CHECK(std::filesystem::exists(d / "ev" / "report.json"));
  // evaluating on the training manifest is a protocol violation
  CHECK(run_cli("eval --checkpoint " + ckpt + " --manifest " + manifest + " --train-manifest " + manifest +
                " --out " + (d / "ev2").string()) == 3);

  CHECK(run_cli("protocol " + (d / "run.json").string() + " --set output_dir=" + (d / "proto").string()) == 0);
  CHECK(std::filesystem::exists(d / "proto" / "figure_data.csv"));
  CHECK(run_cli("figure-data " + (d / "proto").string(), &out) == 0);
  CHECK(out.rfind("test_set,config,f1_fake,eer\n", 0) == 0);
}
