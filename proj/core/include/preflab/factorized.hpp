#pragma once

// The factorized policy: prompt encodings on a low-dimensional simplex, a
// linear map into a latent space, and a softmax decoder over responses.
// An optional adapter re-maps the simplex encodings between the two
// training stages.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>

#include "preflab/geometry.hpp"
#include "preflab/policy.hpp"

namespace preflab {

VectorXd softmax(const VectorXd& logits);
VectorXd log_softmax(const VectorXd& logits);

struct DecoderParams {
  MatrixXd weight;  // |Y| x N
  VectorXd bias;    // |Y|

  int num_responses() const { return static_cast<int>(weight.rows()); }
  int latent_dim() const { return static_cast<int>(weight.cols()); }
};

// phi(v) = softmax(weight * v + bias).
ResponseDist decode(const DecoderParams& dec, const VectorXd& v);
VectorXd log_decode(const DecoderParams& dec, const VectorXd& v);

// Finite-table adapter: defined only at its stored representatives.
struct AdapterTable {
  MatrixXd reps;    // R x (D+1), distinct simplex points
  MatrixXd values;  // R x (D+1), simplex points
  double match_tol = 1e-9;

  int size() const { return static_cast<int>(reps.rows()); }
  // Index of the representative matching p in infinity norm, or -1.
  int find(const VectorXd& p) const;
};

// Affine adapter followed by Euclidean projection back onto the simplex.
struct AdapterAffine {
  MatrixXd linear;  // (D+1) x (D+1)
  VectorXd offset;  // D+1
};

struct AdapterMap {
  std::variant<AdapterTable, AdapterAffine> repr;

  static AdapterMap identity_table(const MatrixXd& reps, double match_tol = 1e-9);

  bool is_table() const { return std::holds_alternative<AdapterTable>(repr); }
  const AdapterTable& table() const;
  AdapterTable& table();

  // Maps a simplex point to a simplex point.  Table mode throws
  // UndefinedRepresentativeError when p matches no stored representative.
  VectorXd apply(const VectorXd& p) const;
};

struct FactorizedPolicy {
  MatrixXd tau;    // |X| x (D+1), rows on the simplex
  MatrixXd theta;  // N x (D+1)
  DecoderParams decoder;

  int num_prompts() const { return static_cast<int>(tau.rows()); }
  int simplex_dim() const { return static_cast<int>(tau.cols()) - 1; }
  int latent_dim() const { return static_cast<int>(theta.rows()); }
  int num_responses() const { return decoder.num_responses(); }
};

// Shape, finiteness and simplex-row validation (throws InvalidInputError).
void validate_factorized(const FactorizedPolicy& fp, double row_tol = 1e-9);

// pi(.|x) = decode(theta * tau[x]).
ResponseDist evaluate(const FactorizedPolicy& fp, int x);
VectorXd log_evaluate(const FactorizedPolicy& fp, int x);
TabularPolicy evaluate_policy(const FactorizedPolicy& fp);

// pi(.|x) = decode(theta * adapter(tau[x])).
ResponseDist evaluate_with_adapter(const FactorizedPolicy& fp, const AdapterMap& adapter, int x);
VectorXd log_evaluate_with_adapter(const FactorizedPolicy& fp, const AdapterMap& adapter, int x);
TabularPolicy evaluate_policy_with_adapter(const FactorizedPolicy& fp, const AdapterMap& adapter);

// Softmax decoders are shift-invariant: only the centered weight matrix
// determines injectivity.  The certificate reports the rank and smallest
// retained singular value of (I - 11^T/|Y|) * weight.
struct InjectivityCertificate {
  bool injective = false;
  int centered_rank = 0;
  double sigma_min = 0.0;
};
InjectivityCertificate decoder_injectivity(const DecoderParams& dec, double rank_tol = 1e-10);

// Least-squares inversion of the decoder through the centering projector.
// residual is the sup-norm log-space mismatch between decode(v) and q.
struct DecoderInversion {
  VectorXd v;
  double residual = 0.0;
};
DecoderInversion invert_decoder(const DecoderParams& dec, const ResponseDist& q);

// Whether v lies in the image of the simplex under theta (barycentric
// feasibility of theta * p = v for some simplex point p, at tolerance tol).
bool latent_in_image(const MatrixXd& theta, const VectorXd& v, double tol = 1e-6);

// Sampled bi-Lipschitz estimates of the decoder restricted to the image of
// the simplex under theta: ratios of the log-ratio response metric (with
// the given beta) against Euclidean distance in latent space.  Estimates
// are maxima over a deterministic pair stream, so at fixed seed they are
// nondecreasing in `samples`.
struct LipschitzEstimate {
  double l_phi = 0.0;      // d_PY / ||dv||
  double l_phi_inv = 0.0;  // ||dv|| / d_PY
};
LipschitzEstimate decoder_lipschitz_estimate(const DecoderParams& dec, const MatrixXd& theta,
                                             double beta, int samples, std::uint64_t seed);

// Versioned JSON checkpoint round trip.
void save_checkpoint(const FactorizedPolicy& fp, std::ostream& out);
void save_checkpoint(const FactorizedPolicy& fp, const std::string& path);
FactorizedPolicy load_checkpoint(std::istream& in);
FactorizedPolicy load_checkpoint(const std::string& path);

// Versioned JSON adapter round trip (table or affine).
void save_adapter(const AdapterMap& adapter, std::ostream& out);
void save_adapter(const AdapterMap& adapter, const std::string& path);
AdapterMap load_adapter(std::istream& in);
AdapterMap load_adapter(const std::string& path);

}  // namespace preflab
