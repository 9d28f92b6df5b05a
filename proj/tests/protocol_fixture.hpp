#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rawnet/data.hpp"
#include "rawnet/metrics.hpp"

namespace testutil {

// Per-class entry counts of a synthetic three-corpus pool large enough for
// every fixed protocol at `scale` (paths only; nothing is read from disk).
inline std::vector<rawnet::data::ManifestEntry> synthetic_pool(double scale) {
  struct Need {
    const char* domain;
    double real, fake;
  };
  const Need needs[] = {{"for", 32000, 32000}, {"avspoof", 29016, 31400}, {"codecfake", 58400, 56400}};
  std::vector<rawnet::data::ManifestEntry> pool;
  for (const auto& n : needs) {
    for (int label : {rawnet::kLabelReal, rawnet::kLabelFake}) {
      const auto count = static_cast<std::size_t>(std::ceil((label ? n.fake : n.real) * scale)) + 5;
      for (std::size_t i = 0; i < count; ++i) {
        rawnet::data::ManifestEntry e;
        e.path = std::string("/corpus/") + n.domain + "/" + rawnet::label_name(label) + "_" + std::to_string(i) + ".wav";
        e.label = label;
        e.domain = n.domain;
        pool.push_back(e);
      }
    }
  }
  return pool;
}

// (domain, label) -> count
inline std::map<std::pair<std::string, int>, std::size_t> class_counts(
    const std::vector<rawnet::data::ManifestEntry>& v) {
  std::map<std::pair<std::string, int>, std::size_t> m;
  for (const auto& e : v) ++m[{e.domain, e.label}];
  return m;
}

}  // namespace testutil
