#include "csnc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include "csnc/error.hpp"
#include "csnc/train.hpp"

namespace csnc {

GradFault parse_grad_fault(std::string_view name) {
  if (name.empty() || name == "none") return GradFault::none;
  if (name == "sinc-sign" || name == "sinc_sign") return GradFault::sinc_sign;
  throw ConfigError("unknown fault '" + std::string(name) + "' (none|sinc-sign)");
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

void jitter(ModelWeights& w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // Random cutoffs clear of the |.| and Nyquist clamps that mel init sits on.
  std::uniform_real_distribution<double> low(0.005, 0.2), band(0.02, 0.2);
  for (std::size_t i = 0; i < w.sinc.count(); ++i) {
    w.sinc.f_low[i] = low(rng);
    w.sinc.band[i] = band(rng);
  }
  auto perturb_norm = [&](NormWeights& n) {
    for (double& g : n.gain.data()) g = 1.0 + 0.3 * u(rng);
    for (double& b : n.bias.data()) b = 0.2 * u(rng);
  };
  perturb_norm(w.sinc_norm);
  for (auto& c : w.conv) perturb_norm(c.norm);
  for (auto& d : w.dense) {
    perturb_norm(d.norm);
    for (double& b : d.bias.data()) b = 0.1 * u(rng);
  }
  for (double& b : w.head_bias.data()) b = 0.5 * u(rng);
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.seeds == 0) throw ConfigError("gradcheck needs at least one seed");
  GradcheckReport report;
  for (const LossKind head : options.heads) {
    std::map<std::string, GroupReport> groups;
    for (std::size_t seed = 0; seed < options.seeds; ++seed) {
      std::seed_seq seq{static_cast<std::uint32_t>(options.base_seed), static_cast<std::uint32_t>(seed),
                        static_cast<std::uint32_t>(head), 0x67636b00u};
      std::mt19937_64 rng(seq);
      ModelWeights w = init_model(options.config, options.classes, rng());
      jitter(w, rng);

      std::uniform_real_distribution<double> u(-1.0, 1.0);
      Tensor x({options.batch, options.config.chunk_len});
      for (double& v : x.data()) v = u(rng);
      std::uniform_int_distribution<std::size_t> label_dist(0, options.classes - 1);
      std::vector<std::size_t> labels(options.batch);
      for (auto& l : labels) l = label_dist(rng);

      LossConfig lc;
      lc.kind = head;
      lc.m = options.m;
      lc.s = options.s;
      CurriculumState state;
      state.t = head == LossKind::curricular ? 0.25 * (u(rng) + 1.0) : 0.0;

      StepResult analytic = compute_step(w, x, labels, lc, state, 1);
      if (options.fault == GradFault::sinc_sign) {
        for (double& v : analytic.grads.sinc.f_low.data()) v = -v;
        for (double& v : analytic.grads.sinc.band.data()) v = -v;
      }

      auto loss_at = [&](ModelWeights& weights) {
        return compute_loss(lc, embed(weights, x), weights.head, weights.head_bias, labels, state).loss;
      };
      auto params = w.tensors();
      const auto grads = analytic.grads.tensors();
      for (std::size_t k = 0; k < params.size(); ++k) {
        GroupReport& g = groups[weight_group(params[k].name)];
        Tensor& p = *params[k].tensor;
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double orig = p[i];
          auto at = [&](double delta) {
            p[i] = orig + delta;
            const double v = loss_at(w);
            p[i] = orig;
            if (!std::isfinite(v)) {
              throw NumericError("gradcheck: non-finite loss while perturbing " + params[k].name);
            }
            return v;
          };
          const double h = options.h;
          const double centre = at(0.0);
          const double up = at(h), down = at(-h), up2 = at(h / 2.0), down2 = at(-h / 2.0);
          const double fd = (up - down) / (2.0 * h);
          const double fd_half = (up2 - down2) / h;
          // Rounding in the loss limits what a difference quotient resolves
          // to about eps |L| / h, so the floor scales with the loss.
          const double floor = options.floor * std::max(1.0, std::abs(centre));
          // A symmetric kink (|x| at 0) leaves central differences consistent
          // but makes the one-sided slopes disagree.
          const double fwd = (up - centre) / h, bwd = (centre - down) / h;
          const bool kink = std::abs(fwd - bwd) > 0.5 * std::max({std::abs(fwd), std::abs(bwd), floor});
          if (kink || relative_error(fd, fd_half, floor) > options.tol) {
            ++g.skipped;
            continue;
          }
          ++g.checked;
          g.max_rel_err = std::max(g.max_rel_err, relative_error((*grads[k].tensor)[i], fd, floor));
        }
      }
    }
    for (auto& [name, g] : groups) {
      g.head = head;
      g.group = name;
      const std::size_t total = g.checked + g.skipped;
      g.pass = g.max_rel_err < options.tol &&
               static_cast<double>(g.skipped) <= options.max_skip_fraction * static_cast<double>(total);
      report.pass = report.pass && g.pass;
      report.rows.push_back(g);
    }
  }
  return report;
}

std::string GradcheckReport::table() const {
  std::string out = "head          group  max_rel_err  checked  skipped  status\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-13s %-6s %11.3e %8zu %8zu  %s\n", to_string(r.head).c_str(),
                  r.group.c_str(), r.max_rel_err, r.checked, r.skipped, r.pass ? "ok" : "FAIL");
    out += buf;
  }
  return out;
}

std::vector<std::string> GradcheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (!r.pass) out.push_back(to_string(r.head) + "/" + r.group);
  }
  return out;
}

}  // namespace csnc
