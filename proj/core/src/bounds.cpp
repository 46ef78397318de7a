#include "preflab/bounds.hpp"

#include <cmath>
#include <limits>

namespace preflab {

using nlohmann::json;

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw InvalidInputError(std::string("bounds: ") + name + " must be positive and finite");
}

void require_dim(int d, const char* name) {
  if (d < 1) throw InvalidInputError(std::string("bounds: ") + name + " must be >= 1");
}

void require_omega(double omega) {
  if (!(omega > 0.0) || !(omega < 1.0))
    throw InvalidInputError("bounds: omega must lie in (0, 1)");
}

// log(a + b) from log a and log b, stable for wildly different magnitudes.
double log_add(double la, double lb) {
  if (la < lb) std::swap(la, lb);
  if (std::isinf(la) && la > 0.0) return la;
  return la + std::log1p(std::exp(lb - la));
}

}  // namespace

LogBound log_bound_from(double log_value) {
  LogBound b;
  b.log_value = log_value;
  b.value = std::exp(log_value);
  return b;
}

LogBound covering_number_simplex(int simplex_dim, double cov_const, double scale, double kappa) {
  require_dim(simplex_dim, "simplex_dim");
  require_positive(cov_const, "cov_const");
  require_positive(scale, "scale");
  require_positive(kappa, "kappa");
  const double d = static_cast<double>(simplex_dim);
  const double log_base = std::log(2.0 * cov_const * scale) + 0.5 * std::log(d) - std::log(kappa);
  return log_bound_from(d * log_base);
}

LogBound composite_covering_bound(int simplex_dim, double cov_const, double l_phi,
                                  double theta_opnorm, double kappa, double delta) {
  require_dim(simplex_dim, "simplex_dim");
  require_positive(cov_const, "cov_const");
  require_positive(l_phi, "l_phi");
  require_positive(theta_opnorm, "theta_opnorm");
  require_positive(kappa, "kappa");
  require_positive(delta, "delta");
  const double d = static_cast<double>(simplex_dim);
  const double log_base =
      std::log(2.0 * cov_const * l_phi * theta_opnorm) + 0.5 * std::log(d) - std::log(kappa);
  // Exponent: D * (2 E sqrt(D) / delta)^D, one covering ball per level-set
  // cell of the encoding.
  const double cells = d * std::pow(2.0 * cov_const * std::sqrt(d) / delta, d);
  return log_bound_from(cells * log_base);
}

LogBound sample_complexity_with_proxy(int simplex_dim, double epsilon, double omega, double l_phi,
                                      double theta_opnorm, double l_pibar) {
  require_dim(simplex_dim, "simplex_dim");
  require_positive(epsilon, "epsilon");
  require_omega(omega);
  require_positive(l_phi, "l_phi");
  require_positive(theta_opnorm, "theta_opnorm");
  require_positive(l_pibar, "l_pibar");
  const double d = static_cast<double>(simplex_dim);
  const double geom = l_phi * theta_opnorm * std::sqrt(d) / epsilon;
  const double log_factor_arg = 96.0 * geom;  // note: no L_pibar inside the log
  if (!(log_factor_arg > 1.0))
    throw DomainError("sample_complexity_with_proxy: logarithmic factor is not positive");
  const double log_main = std::log(d) - 2.0 * std::log(epsilon) +
                          d * std::log(96.0 * geom * l_pibar) +
                          std::log(std::log(log_factor_arg));
  return log_bound_from(log_add(log_main, std::log(std::log(1.0 / omega))));
}

LogBound sample_complexity_without_proxy(int embedding_dim, double epsilon, double omega,
                                         double l_phi, double theta_opnorm, double l_pibar,
                                         double cov_const_prime) {
  require_dim(embedding_dim, "embedding_dim");
  require_positive(epsilon, "epsilon");
  require_omega(omega);
  require_positive(l_phi, "l_phi");
  require_positive(theta_opnorm, "theta_opnorm");
  require_positive(l_pibar, "l_pibar");
  require_positive(cov_const_prime, "cov_const_prime");
  const double d = static_cast<double>(embedding_dim);
  const double arg = 48.0 * l_phi * theta_opnorm * l_pibar * cov_const_prime * std::sqrt(d) /
                     epsilon;  // the same expression powers and logs
  if (!(arg > 1.0))
    throw DomainError("sample_complexity_without_proxy: logarithmic factor is not positive");
  const double log_main =
      std::log(d) - 2.0 * std::log(epsilon) + d * std::log(arg) + std::log(std::log(arg));
  return log_bound_from(log_add(log_main, std::log(std::log(1.0 / omega))));
}

double concentration_bound(double cov_log, double alpha, double n, double epsilon,
                           double reward_bound) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw InvalidInputError("concentration_bound: alpha must lie in (0, 1)");
  require_positive(n, "n");
  require_positive(epsilon, "epsilon");
  require_positive(reward_bound, "reward_bound");
  if (!std::isfinite(cov_log)) throw InvalidInputError("concentration_bound: cov_log not finite");
  const double boundary = 1.0 - alpha;
  return std::log(2.0) + cov_log -
         2.0 * boundary * boundary * n * epsilon * epsilon /
             (4.0 * reward_bound * reward_bound);
}

AlphaSweep concentration_alpha_sweep(const std::function<double(double)>& cov_log_fn, double n,
                                     double epsilon, double reward_bound) {
  if (!cov_log_fn) throw InvalidInputError("concentration_alpha_sweep: missing covering function");
  AlphaSweep sweep;
  sweep.best_log_prob = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= 19; ++i) {
    const double alpha = 0.05 * static_cast<double>(i);
    const double cov_log = cov_log_fn(alpha * epsilon / 4.0);
    const double log_prob = concentration_bound(cov_log, alpha, n, epsilon, reward_bound);
    sweep.grid.emplace_back(alpha, log_prob);
    if (log_prob < sweep.best_log_prob) {
      sweep.best_log_prob = log_prob;
      sweep.best_alpha = alpha;
    }
  }
  return sweep;
}

BoundInputs bound_inputs_from_json(const json& j) {
  BoundInputs in;
  auto get = [&j](const char* key, auto fallback) {
    using T = decltype(fallback);
    return j.contains(key) ? j.at(key).get<T>() : fallback;
  };
  try {
    in.simplex_dim = get("simplex_dim", in.simplex_dim);
    in.embedding_dim = get("embedding_dim", in.embedding_dim);
    in.epsilon = get("epsilon", in.epsilon);
    in.omega = get("omega", in.omega);
    in.l_phi = get("l_phi", in.l_phi);
    in.theta_opnorm = get("theta_opnorm", in.theta_opnorm);
    in.l_pibar = get("l_pibar", in.l_pibar);
    in.reward_bound = get("reward_bound", in.reward_bound);
    in.cov_const = get("cov_const", in.cov_const);
    in.cov_const_prime = get("cov_const_prime", in.cov_const_prime);
    in.n_samples = get("n_samples", in.n_samples);
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("bound inputs: malformed JSON: ") + e.what());
  }
  return in;
}

json bound_inputs_to_json(const BoundInputs& in) {
  return json{{"simplex_dim", in.simplex_dim},
              {"embedding_dim", in.embedding_dim},
              {"epsilon", in.epsilon},
              {"omega", in.omega},
              {"l_phi", in.l_phi},
              {"theta_opnorm", in.theta_opnorm},
              {"l_pibar", in.l_pibar},
              {"reward_bound", in.reward_bound},
              {"cov_const", in.cov_const},
              {"cov_const_prime", in.cov_const_prime},
              {"n_samples", in.n_samples}};
}

json bounds_record(const BoundInputs& in) {
  auto bound_json = [](const LogBound& b) {
    return json{{"log", b.log_value}, {"value", b.value}};
  };
  const double kappa = in.epsilon / 8.0;
  const double delta = in.epsilon / (48.0 * in.l_phi * in.theta_opnorm * in.l_pibar);
  json out;
  out["inputs"] = bound_inputs_to_json(in);
  out["simplex_covering"] = bound_json(
      covering_number_simplex(in.simplex_dim, in.cov_const, in.l_phi * in.theta_opnorm, kappa));
  out["composite_covering"] = bound_json(composite_covering_bound(
      in.simplex_dim, in.cov_const, in.l_phi, in.theta_opnorm, kappa, delta));
  out["with_proxy"] = bound_json(sample_complexity_with_proxy(
      in.simplex_dim, in.epsilon, in.omega, in.l_phi, in.theta_opnorm, in.l_pibar));
  out["without_proxy"] = bound_json(
      sample_complexity_without_proxy(in.embedding_dim, in.epsilon, in.omega, in.l_phi,
                                      in.theta_opnorm, in.l_pibar, in.cov_const_prime));
  const AlphaSweep sweep = concentration_alpha_sweep(
      [&in, delta](double k) {
        return composite_covering_bound(in.simplex_dim, in.cov_const, in.l_phi, in.theta_opnorm,
                                        k, delta)
            .log_value;
      },
      in.n_samples, in.epsilon, in.reward_bound);
  json grid = json::array();
  for (const auto& [alpha, log_prob] : sweep.grid) grid.push_back({alpha, log_prob});
  out["concentration_sweep"] = {
      {"best_alpha", sweep.best_alpha}, {"best_log_prob", sweep.best_log_prob}, {"grid", grid}};
  return out;
}

}  // namespace preflab
