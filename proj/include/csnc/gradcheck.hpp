#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csnc/losses.hpp"
#include "csnc/model.hpp"

namespace csnc {

/// Deliberate defects for checking that the gradient check catches them.
enum class GradFault { none, sinc_sign };

GradFault parse_grad_fault(std::string_view name);

struct GradcheckOptions {
  std::size_t seeds = 20;
  double h = 1e-5;
  double tol = 1e-4;
  double floor = 1e-6;  // relative-error denominator floor, times max(1, |loss|)
  std::size_t classes = 3;
  std::size_t batch = 2;
  double m = 0.5;
  double s = 64.0;
  double max_skip_fraction = 0.1;
  std::vector<LossKind> heads{LossKind::softmax, LossKind::norm_softmax, LossKind::arcface,
                              LossKind::am_softmax, LossKind::curricular};
  GradFault fault = GradFault::none;
  std::uint64_t base_seed = 0;
  ModelConfig config = ModelConfig::miniature();
};

struct GroupReport {
  LossKind head = LossKind::softmax;
  std::string group;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates where the finite difference itself is unstable
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GroupReport> rows;
  bool pass = true;

  std::string table() const;
  std::vector<std::string> failures() const;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// For each head and seed: a jittered miniature model, a random input in
/// [-1, 1] and random labels. Every weight coordinate is compared against a
/// central difference of the end-to-end loss. A coordinate sits on a kink
/// (max pool switch, leaky relu at zero, |.| at zero, curricular branch
/// change) when its one-sided slopes disagree or its central differences at
/// h and h/2 disagree beyond the tolerance; it is skipped, and a group fails
/// if more than max_skip_fraction of it is skipped.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace csnc
