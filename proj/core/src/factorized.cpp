#include "preflab/factorized.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "preflab/rng.hpp"

namespace preflab {

using nlohmann::json;

VectorXd softmax(const VectorXd& logits) {
  const double peak = logits.maxCoeff();
  VectorXd w = (logits.array() - peak).exp();
  return w / w.sum();
}

VectorXd log_softmax(const VectorXd& logits) {
  const double peak = logits.maxCoeff();
  const double lse = peak + std::log((logits.array() - peak).exp().sum());
  return logits.array() - lse;
}

ResponseDist decode(const DecoderParams& dec, const VectorXd& v) {
  if (v.size() != dec.latent_dim()) throw InvalidInputError("decode: latent size mismatch");
  return ResponseDist{softmax(dec.weight * v + dec.bias)};
}

VectorXd log_decode(const DecoderParams& dec, const VectorXd& v) {
  if (v.size() != dec.latent_dim()) throw InvalidInputError("decode: latent size mismatch");
  return log_softmax(dec.weight * v + dec.bias);
}

int AdapterTable::find(const VectorXd& p) const {
  for (int i = 0; i < reps.rows(); ++i)
    if ((reps.row(i).transpose() - p).cwiseAbs().maxCoeff() <= match_tol) return i;
  return -1;
}

AdapterMap AdapterMap::identity_table(const MatrixXd& reps, double match_tol) {
  if (reps.rows() == 0) throw InvalidInputError("AdapterMap: empty representative set");
  return AdapterMap{AdapterTable{reps, reps, match_tol}};
}

const AdapterTable& AdapterMap::table() const {
  if (!is_table()) throw InvalidInputError("AdapterMap: not a table adapter");
  return std::get<AdapterTable>(repr);
}

AdapterTable& AdapterMap::table() {
  if (!is_table()) throw InvalidInputError("AdapterMap: not a table adapter");
  return std::get<AdapterTable>(repr);
}

VectorXd AdapterMap::apply(const VectorXd& p) const {
  if (const auto* t = std::get_if<AdapterTable>(&repr)) {
    const int i = t->find(p);
    if (i < 0)
      throw UndefinedRepresentativeError(
          "AdapterMap: query point matches no stored representative");
    return t->values.row(i).transpose();
  }
  const auto& aff = std::get<AdapterAffine>(repr);
  if (aff.linear.cols() != p.size()) throw InvalidInputError("AdapterMap: size mismatch");
  return geometry::project_to_simplex(aff.linear * p + aff.offset);
}

void validate_factorized(const FactorizedPolicy& fp, double row_tol) {
  if (fp.tau.rows() == 0 || fp.tau.cols() < 2)
    throw InvalidInputError("FactorizedPolicy: tau must be |X| x (D+1) with D >= 1");
  if (fp.theta.cols() != fp.tau.cols())
    throw InvalidInputError("FactorizedPolicy: theta/tau width mismatch");
  if (fp.decoder.weight.cols() != fp.theta.rows())
    throw InvalidInputError("FactorizedPolicy: decoder/theta size mismatch");
  if (fp.decoder.bias.size() != fp.decoder.weight.rows())
    throw InvalidInputError("FactorizedPolicy: decoder bias size mismatch");
  if (!fp.tau.allFinite() || !fp.theta.allFinite() || !fp.decoder.weight.allFinite() ||
      !fp.decoder.bias.allFinite())
    throw InvalidInputError("FactorizedPolicy: non-finite parameters");
  for (int x = 0; x < fp.tau.rows(); ++x)
    geometry::SimplexPoint::checked(fp.tau.row(x).transpose(), row_tol);
}

ResponseDist evaluate(const FactorizedPolicy& fp, int x) {
  if (x < 0 || x >= fp.num_prompts()) throw InvalidInputError("evaluate: prompt out of range");
  return decode(fp.decoder, fp.theta * fp.tau.row(x).transpose());
}

VectorXd log_evaluate(const FactorizedPolicy& fp, int x) {
  if (x < 0 || x >= fp.num_prompts()) throw InvalidInputError("evaluate: prompt out of range");
  return log_decode(fp.decoder, fp.theta * fp.tau.row(x).transpose());
}

TabularPolicy evaluate_policy(const FactorizedPolicy& fp) {
  MatrixXd t(fp.num_prompts(), fp.num_responses());
  for (int x = 0; x < fp.num_prompts(); ++x) t.row(x) = evaluate(fp, x).probs.transpose();
  return TabularPolicy{std::move(t)};
}

ResponseDist evaluate_with_adapter(const FactorizedPolicy& fp, const AdapterMap& adapter, int x) {
  if (x < 0 || x >= fp.num_prompts()) throw InvalidInputError("evaluate: prompt out of range");
  return decode(fp.decoder, fp.theta * adapter.apply(fp.tau.row(x).transpose()));
}

VectorXd log_evaluate_with_adapter(const FactorizedPolicy& fp, const AdapterMap& adapter, int x) {
  if (x < 0 || x >= fp.num_prompts()) throw InvalidInputError("evaluate: prompt out of range");
  return log_decode(fp.decoder, fp.theta * adapter.apply(fp.tau.row(x).transpose()));
}

TabularPolicy evaluate_policy_with_adapter(const FactorizedPolicy& fp, const AdapterMap& adapter) {
  MatrixXd t(fp.num_prompts(), fp.num_responses());
  for (int x = 0; x < fp.num_prompts(); ++x)
    t.row(x) = evaluate_with_adapter(fp, adapter, x).probs.transpose();
  return TabularPolicy{std::move(t)};
}

InjectivityCertificate decoder_injectivity(const DecoderParams& dec, double rank_tol) {
  const int ny = dec.num_responses();
  if (ny == 0) throw InvalidInputError("decoder_injectivity: empty decoder");
  // Softmax ignores uniform logit shifts, so inject through the centering
  // projector I - 11^T / |Y| before asking for rank.
  MatrixXd centered = dec.weight;
  centered.rowwise() -= dec.weight.colwise().mean();
  Eigen::JacobiSVD<MatrixXd> svd(centered);
  const VectorXd& sigma = svd.singularValues();
  InjectivityCertificate cert;
  const double cut = sigma.size() ? rank_tol * sigma[0] : 0.0;
  for (int i = 0; i < sigma.size(); ++i)
    if (sigma[i] > cut) {
      ++cert.centered_rank;
      cert.sigma_min = sigma[i];
    }
  cert.injective = cert.centered_rank == dec.latent_dim();
  if (!cert.injective) cert.sigma_min = 0.0;
  return cert;
}

DecoderInversion invert_decoder(const DecoderParams& dec, const ResponseDist& q) {
  if (q.probs.size() != dec.num_responses())
    throw InvalidInputError("invert_decoder: response count mismatch");
  const int ny = dec.num_responses();
  VectorXd logq(ny);
  for (int y = 0; y < ny; ++y) logq[y] = std::log(std::max(q.probs[y], kProbFloor));
  // Solve (P W) v = P (log q - b) in least squares, P the centering projector.
  MatrixXd centered_w = dec.weight;
  centered_w.rowwise() -= dec.weight.colwise().mean();
  VectorXd target = logq - dec.bias;
  target.array() -= target.mean();
  DecoderInversion inv;
  inv.v = geometry::pseudoinverse(centered_w) * target;
  inv.residual = d_py(decode(dec, inv.v), q, 1.0);
  return inv;
}

bool latent_in_image(const MatrixXd& theta, const VectorXd& v, double tol) {
  if (v.size() != theta.rows()) throw InvalidInputError("latent_in_image: size mismatch");
  return geometry::slice_nonempty(theta, v, tol);
}

LipschitzEstimate decoder_lipschitz_estimate(const DecoderParams& dec, const MatrixXd& theta,
                                             double beta, int samples, std::uint64_t seed) {
  if (samples < 1) throw InvalidInputError("decoder_lipschitz_estimate: samples must be >= 1");
  if (!(beta > 0.0)) throw InvalidInputError("decoder_lipschitz_estimate: beta must be positive");
  if (theta.rows() != dec.latent_dim())
    throw InvalidInputError("decoder_lipschitz_estimate: theta/decoder mismatch");
  Rng rng(seed);
  LipschitzEstimate est;
  const int dim = static_cast<int>(theta.cols());
  for (int i = 0; i < samples; ++i) {
    const VectorXd v1 = theta * rng.simplex_uniform(dim);
    const VectorXd v2 = theta * rng.simplex_uniform(dim);
    const double den = (v1 - v2).norm();
    if (den < 1e-12) continue;
    const double num = d_py(decode(dec, v1), decode(dec, v2), beta);
    if (num < 1e-15) continue;
    est.l_phi = std::max(est.l_phi, num / den);
    est.l_phi_inv = std::max(est.l_phi_inv, den / num);
  }
  return est;
}

namespace {

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

MatrixXd matrix_from_json(const json& j, const char* who) {
  if (!j.is_array() || j.empty()) throw InvalidInputError(std::string(who) + ": expected matrix");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.at(0).size());
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<int>(row.size()) != cols)
      throw InvalidInputError(std::string(who) + ": ragged matrix");
    for (int k = 0; k < cols; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

VectorXd vector_from_json(const json& j, const char* who) {
  if (!j.is_array()) throw InvalidInputError(std::string(who) + ": expected vector");
  VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

constexpr int kCheckpointVersion = 1;
constexpr int kAdapterVersion = 1;

}  // namespace

void save_checkpoint(const FactorizedPolicy& fp, std::ostream& out) {
  validate_factorized(fp);
  json j = {{"version", kCheckpointVersion},
            {"num_prompts", fp.num_prompts()},
            {"num_responses", fp.num_responses()},
            {"latent_dim", fp.latent_dim()},
            {"simplex_dim", fp.simplex_dim()},
            {"tau", matrix_to_json(fp.tau)},
            {"theta", matrix_to_json(fp.theta)},
            {"weight", matrix_to_json(fp.decoder.weight)},
            {"bias", vector_to_json(fp.decoder.bias)}};
  out << j.dump(2) << "\n";
}

void save_checkpoint(const FactorizedPolicy& fp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("save_checkpoint: cannot open " + path);
  save_checkpoint(fp, out);
}

FactorizedPolicy load_checkpoint(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("load_checkpoint: malformed JSON: ") + e.what());
  }
  if (!j.contains("version"))
    throw InvalidInputError("load_checkpoint: missing version field");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw InvalidInputError("load_checkpoint: unsupported version");
  FactorizedPolicy fp;
  try {
    fp.tau = matrix_from_json(j.at("tau"), "load_checkpoint");
    fp.theta = matrix_from_json(j.at("theta"), "load_checkpoint");
    fp.decoder.weight = matrix_from_json(j.at("weight"), "load_checkpoint");
    fp.decoder.bias = vector_from_json(j.at("bias"), "load_checkpoint");
    if (j.at("num_prompts").get<int>() != fp.num_prompts() ||
        j.at("num_responses").get<int>() != fp.num_responses() ||
        j.at("latent_dim").get<int>() != fp.latent_dim() ||
        j.at("simplex_dim").get<int>() != fp.simplex_dim())
      throw InvalidInputError("load_checkpoint: declared sizes disagree with payload");
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("load_checkpoint: missing field: ") + e.what());
  }
  validate_factorized(fp);
  return fp;
}

FactorizedPolicy load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("load_checkpoint: cannot open " + path);
  return load_checkpoint(in);
}

void save_adapter(const AdapterMap& adapter, std::ostream& out) {
  json j;
  j["version"] = kAdapterVersion;
  if (adapter.is_table()) {
    const auto& t = adapter.table();
    j["kind"] = "table";
    j["match_tol"] = t.match_tol;
    json entries = json::array();
    for (int i = 0; i < t.size(); ++i)
      entries.push_back({{"representative", vector_to_json(t.reps.row(i).transpose())},
                         {"adapted", vector_to_json(t.values.row(i).transpose())}});
    j["entries"] = std::move(entries);
  } else {
    const auto& aff = std::get<AdapterAffine>(adapter.repr);
    j["kind"] = "affine";
    j["linear"] = matrix_to_json(aff.linear);
    j["offset"] = vector_to_json(aff.offset);
  }
  out << j.dump(2) << "\n";
}

void save_adapter(const AdapterMap& adapter, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("save_adapter: cannot open " + path);
  save_adapter(adapter, out);
}

AdapterMap load_adapter(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("load_adapter: malformed JSON: ") + e.what());
  }
  if (!j.contains("version") || j.at("version").get<int>() != kAdapterVersion)
    throw InvalidInputError("load_adapter: missing or unsupported version");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "table") {
    const auto& entries = j.at("entries");
    if (!entries.is_array() || entries.empty())
      throw InvalidInputError("load_adapter: empty table");
    const int r = static_cast<int>(entries.size());
    AdapterTable t;
    t.match_tol = j.at("match_tol").get<double>();
    for (int i = 0; i < r; ++i) {
      const VectorXd rep = vector_from_json(entries.at(static_cast<std::size_t>(i)).at("representative"),
                                            "load_adapter");
      const VectorXd val = vector_from_json(entries.at(static_cast<std::size_t>(i)).at("adapted"),
                                            "load_adapter");
      if (i == 0) {
        t.reps.resize(r, rep.size());
        t.values.resize(r, val.size());
      }
      t.reps.row(i) = rep.transpose();
      t.values.row(i) = val.transpose();
    }
    return AdapterMap{std::move(t)};
  }
  if (kind == "affine") {
    AdapterAffine aff;
    aff.linear = matrix_from_json(j.at("linear"), "load_adapter");
    aff.offset = vector_from_json(j.at("offset"), "load_adapter");
    return AdapterMap{std::move(aff)};
  }
  throw InvalidInputError("load_adapter: unknown adapter kind '" + kind + "'");
}

AdapterMap load_adapter(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("load_adapter: cannot open " + path);
  return load_adapter(in);
}

}  // namespace preflab
