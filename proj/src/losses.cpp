#include "rawnet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "rawnet/errors.hpp"

namespace rawnet {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

void check_sizes(std::span<const double> p, std::span<const int> y) {
  if (p.size() != y.size()) throw ShapeError("loss: probabilities and labels differ in length");
  if (p.empty()) throw ShapeError("loss: empty batch");
  for (int v : y)
    if (v != 0 && v != 1) throw ArgumentError("loss: labels must be 0 or 1");
}

}  // namespace

void LossConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("loss.gamma must be a finite value >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss.alpha must lie in [0, 1]");
}

double bce_loss(std::span<const double> p, std::span<const int> y, std::vector<double>* grad) {
  check_sizes(p, y);
  const double n = static_cast<double>(p.size());
  if (grad) grad->assign(p.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = clamp_prob(p[i]);
    if (y[i] == 1) {
      sum += -std::log(pc);
      if (grad) (*grad)[i] = -1.0 / pc / n;
    } else {
      sum += -std::log(1.0 - pc);
      if (grad) (*grad)[i] = 1.0 / (1.0 - pc) / n;
    }
  }
  return sum / n;
}

double focal_loss(std::span<const double> p, std::span<const int> y, double gamma, double alpha, AlphaMode mode,
                  std::vector<double>* grad) {
  check_sizes(p, y);
  const double n = static_cast<double>(p.size());
  if (grad) grad->assign(p.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = clamp_prob(p[i]);
    const bool pos = y[i] == 1;
    // same expressions as bce_loss so gamma = 0, alpha = 0.5 reproduces it exactly
    const double pt = pos ? pc : 1.0 - pc;
    const double log_pt = pos ? std::log(pc) : std::log(1.0 - pc);
    const double a = (mode == AlphaMode::flat || pos) ? alpha : 1.0 - alpha;
    const double focus = gamma == 0.0 ? 1.0 : std::pow(1.0 - pt, gamma);
    sum += a * (focus * -log_pt);
    if (grad) {
      // dL/dpt = a [gamma (1-pt)^(gamma-1) log pt - (1-pt)^gamma / pt]
      const double dfocus = gamma == 0.0 ? 0.0 : gamma * std::pow(1.0 - pt, gamma - 1.0);
      const double dpt = a * (dfocus * log_pt - focus / pt);
      (*grad)[i] = (pos ? dpt : -dpt) / n;
    }
  }
  return sum / n;
}

double compute_loss(const LossConfig& cfg, std::span<const double> p, std::span<const int> y,
                    std::vector<double>* grad) {
  if (cfg.kind == LossKind::bce) return bce_loss(p, y, grad);
  return focal_loss(p, y, cfg.gamma, cfg.alpha, cfg.alpha_mode, grad);
}

std::string to_string(LossKind k) { return k == LossKind::bce ? "bce" : "focal"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "bce") return LossKind::bce;
  if (s == "focal") return LossKind::focal;
  throw ConfigError("unknown loss kind '" + s + "' (expected bce or focal)");
}

std::string to_string(AlphaMode m) { return m == AlphaMode::flat ? "flat" : "class_conditional"; }

AlphaMode alpha_mode_from_string(const std::string& s) {
  if (s == "flat") return AlphaMode::flat;
  if (s == "class_conditional") return AlphaMode::class_conditional;
  throw ConfigError("unknown alpha mode '" + s + "' (expected class_conditional or flat)");
}

}  // namespace rawnet
