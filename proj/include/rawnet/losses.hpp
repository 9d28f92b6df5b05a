#pragma once

#include <span>
#include <string>
#include <vector>

namespace rawnet {

inline constexpr double kProbClamp = 1e-7;

enum class LossKind { bce, focal };

// How the focal weight alpha_t is chosen. class_conditional: alpha for fake
// (y = 1) and 1 - alpha for real. flat: alpha for both classes.
enum class AlphaMode { class_conditional, flat };

struct LossConfig {
  LossKind kind = LossKind::focal;
  double gamma = 2.0;
  double alpha = 0.25;
  AlphaMode alpha_mode = AlphaMode::class_conditional;

  void validate() const;  // throws ConfigError
};

/// Mean binary cross-entropy. p is clamped to [1e-7, 1 - 1e-7] before the
/// log. When grad is non-null it receives dLoss/dp_i (already divided by the
/// batch size), evaluated at the clamped probability.
double bce_loss(std::span<const double> p, std::span<const int> y, std::vector<double>* grad = nullptr);

/// Mean focal loss -alpha_t (1 - p_t)^gamma log(p_t).
double focal_loss(std::span<const double> p, std::span<const int> y, double gamma, double alpha,
                  AlphaMode mode = AlphaMode::class_conditional, std::vector<double>* grad = nullptr);

double compute_loss(const LossConfig& cfg, std::span<const double> p, std::span<const int> y,
                    std::vector<double>* grad = nullptr);

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(AlphaMode m);
AlphaMode alpha_mode_from_string(const std::string& s);

}  // namespace rawnet
