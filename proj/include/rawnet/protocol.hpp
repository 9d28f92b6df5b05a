#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rawnet/data.hpp"
#include "rawnet/metrics.hpp"
#include "rawnet/train.hpp"

namespace rawnet {

// Domain tags expected in manifests.
inline constexpr const char* kDomainFoR = "for";
inline constexpr const char* kDomainAVSpoof = "avspoof";
inline constexpr const char* kDomainCodecFake = "codecfake";
inline constexpr const char* kDomainSynthetic = "synthetic";

enum class Protocol { in_domain, cross_domain, triple_domain, cross_augmented, triple_augmented, sanity, custom };

std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);  // throws ConfigError

struct TestSetSpec {
  std::string name;                  // e.g. "for", "cross"
  std::vector<std::string> domains;  // union of these domains' test entries
};

struct ProtocolPlan {
  Protocol protocol = Protocol::custom;
  double scale = 1.0;
  data::MixSpec mix;
  std::vector<TestSetSpec> test_sets;
  std::vector<std::string> required_domains;
  bool augment = false;
};

/// Full-scale per-class caps multiplied by `scale` (rounded to nearest).
/// `custom` is not a fixed protocol and is rejected here.
ProtocolPlan plan_protocol(Protocol p, double scale, std::uint64_t mix_seed);

/// Plan for user-supplied caps: one test set per domain with test caps.
ProtocolPlan custom_plan(const data::MixSpec& mix);

struct ComposedProtocol {
  std::vector<data::ManifestEntry> train;
  std::vector<data::ManifestEntry> val;
  std::vector<std::pair<std::string, std::vector<data::ManifestEntry>>> tests;
};

/// Composes train/val/test pools; checks that every required domain is present.
ComposedProtocol compose_protocol(const ProtocolPlan& plan, const std::vector<data::ManifestEntry>& pool);

struct TestSetResult {
  std::string name;
  EvalOutput eval;
};

struct ProtocolResult {
  TrainResult training;
  std::vector<TestSetResult> tests;
};

/// Trains on the composed pool and evaluates every test set of the plan,
/// verifying that no score-file path was used for training.
ProtocolResult run_protocol(const ProtocolPlan& plan, const ComposedProtocol& composed, TrainConfig cfg,
                            const data::ClipSource& source, const EpochCallback& on_epoch = {});

/// Report JSON for one test set: metrics + protocol name + scale + config echo.
nlohmann::json test_report_json(const std::string& protocol, const std::string& test_set, double scale,
                                const EvalReport& report, const nlohmann::json& config_echo);

/// Collects every report JSON below `dir` into `test_set,config,f1_fake,eer`
/// rows sorted by (config, test_set). Throws ArgumentError when none exist.
std::string figure_data_csv(const std::filesystem::path& dir);

}  // namespace rawnet
