#include "aaexp/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "aaexp/error.hpp"
#include "aaexp/stats.hpp"

namespace aaexp {

namespace {

constexpr std::uint64_t kProbeSeed = 0x5eed'cafe'f00dULL;
constexpr std::size_t kProbeDraws = 4096;

double horner(const std::vector<double>& c, double x) {
  double v = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
  return v;
}

bool is_builtin_name(const std::string& name) {
  return name == "paper_hetero" || name == "paper_homo_var" || name == "paper_homo_mean";
}

double builtin_variance(const std::string& name, std::size_t arm, double x) {
  const double treated = 2.0 + 1.2 * std::sin(2.0 * x) + (x + x * x) / 25.0;
  if (arm == 1 || name == "paper_homo_var") return treated;
  return 2.0 + 0.8 * std::cos(x / 2.0) + x * x / 50.0;
}

void check_vector(const std::vector<double>& v, std::size_t dim, const char* field) {
  if (v.size() != dim) throw ConfigError(field, "expected one value per dimension");
  for (double x : v)
    if (!std::isfinite(x)) throw ConfigError(field, "values must be finite");
}

double polynomial_moment(const std::vector<double>& c, const CovariateLaw& q) {
  double s = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) s += c[k] * q.raw_moment(0, static_cast<int>(k));
  return s;
}

}  // namespace

CovariateLaw CovariateLaw::gaussian(std::vector<double> mean, std::vector<double> variance) {
  if (mean.empty()) throw ConfigError("covariate.dimension", "must be positive");
  check_vector(mean, mean.size(), "covariate.mean");
  check_vector(variance, mean.size(), "covariate.variance");
  for (double v : variance)
    if (!(v > 0.0)) throw ConfigError("covariate.variance", "must be positive");
  CovariateLaw law;
  law.kind_ = CovariateKind::gaussian;
  law.dim_ = mean.size();
  law.a_ = std::move(mean);
  law.b_ = std::move(variance);
  return law;
}

CovariateLaw CovariateLaw::gaussian(double mean, double variance, std::size_t dim) {
  return gaussian(std::vector<double>(dim, mean), std::vector<double>(dim, variance));
}

CovariateLaw CovariateLaw::uniform(std::vector<double> lo, std::vector<double> hi) {
  if (lo.empty()) throw ConfigError("covariate.dimension", "must be positive");
  check_vector(lo, lo.size(), "covariate.lo");
  check_vector(hi, lo.size(), "covariate.hi");
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (!(lo[i] < hi[i])) throw ConfigError("covariate.lo", "must be below covariate.hi");
  CovariateLaw law;
  law.kind_ = CovariateKind::uniform;
  law.dim_ = lo.size();
  law.a_ = std::move(lo);
  law.b_ = std::move(hi);
  return law;
}

CovariateLaw CovariateLaw::uniform(double lo, double hi, std::size_t dim) {
  return uniform(std::vector<double>(dim, lo), std::vector<double>(dim, hi));
}

CovariateLaw CovariateLaw::empirical(const std::vector<Covariate>& points) {
  if (points.empty()) throw ConfigError("covariate.points", "must be non-empty");
  const std::size_t dim = points.front().size();
  if (dim == 0) throw ConfigError("covariate.points[0]", "empty covariate vector");
  CovariateLaw law;
  law.kind_ = CovariateKind::empirical;
  law.dim_ = dim;
  law.points_ = PointSet(dim);
  law.points_.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::string field = "covariate.points[" + std::to_string(i) + "]";
    if (points[i].size() != dim)
      throw ConfigError(field, "has dimension " + std::to_string(points[i].size()) +
                                   ", expected " + std::to_string(dim));
    for (double x : points[i])
      if (!std::isfinite(x)) throw ConfigError(field, "values must be finite");
    law.points_.push_back(points[i]);
  }
  return law;
}

double CovariateLaw::density(Point x) const {
  if (x.size() != dim_) throw Error("density: covariate dimension mismatch");
  switch (kind_) {
    case CovariateKind::gaussian: {
      double d = 1.0;
      for (std::size_t i = 0; i < dim_; ++i) {
        const double z = x[i] - a_[i];
        d *= std::exp(-z * z / (2.0 * b_[i])) / std::sqrt(2.0 * std::numbers::pi * b_[i]);
      }
      return d;
    }
    case CovariateKind::uniform: {
      double d = 1.0;
      for (std::size_t i = 0; i < dim_; ++i) {
        if (x[i] < a_[i] || x[i] > b_[i]) return 0.0;
        d /= b_[i] - a_[i];
      }
      return d;
    }
    case CovariateKind::empirical: {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < points_.size(); ++i)
        if (std::equal(x.begin(), x.end(), points_[i].begin())) ++hits;
      return static_cast<double>(hits) / static_cast<double>(points_.size());
    }
  }
  return 0.0;
}

double CovariateLaw::cdf(double x1) const {
  switch (kind_) {
    case CovariateKind::gaussian:
      return normal_cdf((x1 - a_[0]) / std::sqrt(b_[0]));
    case CovariateKind::uniform:
      if (x1 <= a_[0]) return 0.0;
      if (x1 >= b_[0]) return 1.0;
      return (x1 - a_[0]) / (b_[0] - a_[0]);
    case CovariateKind::empirical: {
      std::size_t below = 0;
      for (std::size_t i = 0; i < points_.size(); ++i)
        if (points_[i][0] <= x1) ++below;
      return static_cast<double>(below) / static_cast<double>(points_.size());
    }
  }
  return 0.0;
}

double CovariateLaw::raw_moment(std::size_t coord, int k) const {
  if (coord >= dim_) throw Error("raw_moment: coordinate out of range");
  if (k < 0) throw Error("raw_moment: negative order");
  if (k == 0) return 1.0;
  switch (kind_) {
    case CovariateKind::gaussian: {
      const double mu = a_[coord], var = b_[coord];
      double prev = 1.0, cur = mu;
      for (int j = 2; j <= k; ++j) {
        const double next = mu * cur + (j - 1) * var * prev;
        prev = cur;
        cur = next;
      }
      return cur;
    }
    case CovariateKind::uniform: {
      const double lo = a_[coord], hi = b_[coord];
      return (std::pow(hi, k + 1) - std::pow(lo, k + 1)) / ((k + 1) * (hi - lo));
    }
    case CovariateKind::empirical: {
      double s = 0.0;
      for (std::size_t i = 0; i < points_.size(); ++i) s += std::pow(points_[i][coord], k);
      return s / static_cast<double>(points_.size());
    }
  }
  return 0.0;
}

void CovariateLaw::sample_into(RandomStream& rng, std::span<double> out) const {
  switch (kind_) {
    case CovariateKind::gaussian:
      for (std::size_t i = 0; i < dim_; ++i) out[i] = a_[i] + std::sqrt(b_[i]) * rng.normal();
      return;
    case CovariateKind::uniform:
      for (std::size_t i = 0; i < dim_; ++i) out[i] = a_[i] + (b_[i] - a_[i]) * rng.uniform();
      return;
    case CovariateKind::empirical: {
      const Point p = points_[rng.index(points_.size())];
      std::copy(p.begin(), p.end(), out.begin());
      return;
    }
  }
}

Covariate CovariateLaw::sample(RandomStream& rng) const {
  Covariate x(dim_);
  sample_into(rng, x);
  return x;
}

PointSet CovariateLaw::sample_many(RandomStream& rng, std::size_t n) const {
  PointSet out(dim_, n);
  for (std::size_t i = 0; i < n; ++i) sample_into(rng, out.mutable_row(i));
  return out;
}

OutcomeModel::OutcomeModel(MeanSpec mean, VarianceSpec variance, NoiseFamily noise,
                           std::size_t num_arms)
    : mean_(std::move(mean)), variance_(std::move(variance)), noise_(noise),
      num_arms_(num_arms) {}

double OutcomeModel::mean(std::size_t arm, Point x) const {
  return horner(mean_.coefficients.at(arm), x[0]);
}

double OutcomeModel::variance(std::size_t arm, Point x) const {
  if (!variance_.builtin.empty()) return builtin_variance(variance_.builtin, arm, x[0]);
  return horner(variance_.coefficients.at(arm), x[0]);
}

double OutcomeModel::stddev(std::size_t arm, Point x) const {
  return std::sqrt(variance(arm, x));
}

double OutcomeModel::sample(std::size_t arm, Point x, RandomStream& rng) const {
  const double mu = mean(arm, x);
  double eps = 0.0;
  switch (noise_) {
    case NoiseFamily::gaussian:
      eps = rng.normal();
      break;
    case NoiseFamily::uniform:
      eps = std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
      break;
    case NoiseFamily::laplace: {
      const double u = rng.uniform() - 0.5;
      eps = -std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u)) / std::sqrt(2.0);
      break;
    }
    case NoiseFamily::none:
      return mu;
  }
  return mu + stddev(arm, x) * eps;
}

std::vector<double> builtin_mean_constants(const std::string& builtin,
                                           const CovariateLaw& q) {
  const double m1 = q.raw_moment(0, 1);
  const double m2 = q.raw_moment(0, 2);
  double d1 = 0.0, d0 = 0.0;
  if (builtin == "paper_homo_mean") {
    d1 = m1;
    d0 = m1;
  } else if (builtin == "paper_hetero" || builtin == "paper_homo_var") {
    d1 = -m1 + 3.0 * m2 - 1.0;
    d0 = 0.1 * m1 + 0.2;
  } else {
    throw ConfigError("outcome.mu.builtin", "unknown builtin '" + builtin + "'");
  }
  if (std::abs(d1) < 1e-12 || std::abs(d0) < 1e-12)
    throw ConfigError("outcome.mu.builtin",
                      "'" + builtin + "' cannot reach the target means under this covariate law");
  return {7.0 / d0, 10.0 / d1};
}

Scenario make_scenario(CovariateLaw q, MeanSpec mean, VarianceSpec variance,
                       NoiseFamily noise, std::size_t num_treatments, Clamp clamp,
                       std::optional<double> true_ate, bool compute_ate) {
  if (num_treatments < 2) throw ConfigError("num_treatments", "must be at least 2");
  if (!(clamp.lo > 0.0) || !std::isfinite(clamp.hi))
    throw ConfigError("clamp.lo", "must be positive and finite");
  if (!(clamp.lo < clamp.hi)) throw ConfigError("clamp", "lo must be below hi");

  if (!mean.builtin.empty()) {
    if (num_treatments != 2)
      throw ConfigError("outcome.mu.builtin", "builtin means are defined for two treatments");
    const auto c = builtin_mean_constants(mean.builtin, q);
    if (mean.builtin == "paper_homo_mean")
      mean.coefficients = {{0.0, c[0]}, {0.0, c[1]}};
    else
      mean.coefficients = {{0.2 * c[0], 0.1 * c[0]}, {-c[1], -c[1], 3.0 * c[1]}};
  } else {
    if (mean.coefficients.size() != num_treatments)
      throw ConfigError("outcome.mu.polynomial", "expected one coefficient list per treatment");
    for (const auto& c : mean.coefficients) {
      if (c.empty()) throw ConfigError("outcome.mu.polynomial", "empty coefficient list");
      for (double v : c)
        if (!std::isfinite(v)) throw ConfigError("outcome.mu.polynomial", "non-finite coefficient");
    }
  }

  if (!variance.builtin.empty()) {
    if (!is_builtin_name(variance.builtin))
      throw ConfigError("outcome.sigma2.builtin", "unknown builtin '" + variance.builtin + "'");
    if (num_treatments != 2)
      throw ConfigError("outcome.sigma2.builtin",
                        "builtin variances are defined for two treatments");
    variance.coefficients.clear();
  } else {
    if (variance.coefficients.size() != num_treatments)
      throw ConfigError("outcome.sigma2.polynomial",
                        "expected one coefficient list per treatment");
    for (const auto& c : variance.coefficients) {
      if (c.empty()) throw ConfigError("outcome.sigma2.polynomial", "empty coefficient list");
      for (double v : c)
        if (!std::isfinite(v))
          throw ConfigError("outcome.sigma2.polynomial", "non-finite coefficient");
    }
  }

  OutcomeModel outcome(std::move(mean), std::move(variance), noise, num_treatments);

  // Variance range probe on a fixed set of covariates.
  auto probe = [&](Point x) {
    for (std::size_t a = 0; a < num_treatments; ++a) {
      const double v = outcome.variance(a, x);
      if (!(v > clamp.lo && v < clamp.hi)) {
        std::ostringstream msg;
        msg << "variance of treatment " << a << " is " << v << " at x1 = " << x[0]
            << ", outside the clamp (" << clamp.lo << ", " << clamp.hi << ")";
        throw ConfigError("outcome.sigma2", msg.str());
      }
    }
  };
  if (q.kind() == CovariateKind::empirical) {
    for (std::size_t i = 0; i < q.points().size(); ++i) probe(q.points()[i]);
  } else {
    RandomStream rng(kProbeSeed);
    Covariate x(q.dimension());
    for (std::size_t i = 0; i < kProbeDraws; ++i) {
      q.sample_into(rng, x);
      probe(x);
    }
  }

  if (!true_ate && compute_ate) {
    true_ate = polynomial_moment(outcome.mean_spec().coefficients[1], q) -
               polynomial_moment(outcome.mean_spec().coefficients[0], q);
  }
  if (true_ate && !std::isfinite(*true_ate)) throw ConfigError("true_ate", "must be finite");

  return Scenario{std::move(q), std::move(outcome), num_treatments, clamp, true_ate};
}

Scenario build_paper_scenario(PaperCovariate covariate, VarianceMode mode) {
  CovariateLaw q = covariate == PaperCovariate::gaussian ? CovariateLaw::gaussian(1.0, 25.0)
                                                         : CovariateLaw::uniform(-10.0, 10.0);
  std::string name;
  switch (mode) {
    case VarianceMode::heterogeneous: name = "paper_hetero"; break;
    case VarianceMode::homogeneous_variance: name = "paper_homo_var"; break;
    case VarianceMode::homogeneous_mean: name = "paper_homo_mean"; break;
  }
  return make_scenario(std::move(q), MeanSpec{name, {}}, VarianceSpec{name, {}},
                       NoiseFamily::gaussian, 2, Clamp{}, 3.0);
}

std::string to_string(NoiseFamily noise) {
  switch (noise) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::uniform: return "uniform";
    case NoiseFamily::laplace: return "laplace";
    case NoiseFamily::none: return "none";
  }
  return "gaussian";
}

std::string to_string(CovariateKind kind) {
  switch (kind) {
    case CovariateKind::gaussian: return "gaussian";
    case CovariateKind::uniform: return "uniform";
    case CovariateKind::empirical: return "empirical";
  }
  return "gaussian";
}

namespace {

using nlohmann::json;

json param_to_json(const std::vector<double>& v) {
  if (v.size() == 1) return v.front();
  return v;
}

std::vector<double> param_from_json(const json& node, std::size_t dim, const char* field) {
  if (node.is_number()) return std::vector<double>(dim, node.get<double>());
  if (node.is_array()) {
    std::vector<double> out;
    for (const auto& x : node) {
      if (!x.is_number()) throw ConfigError(field, "expected numbers");
      out.push_back(x.get<double>());
    }
    if (out.size() != dim) throw ConfigError(field, "expected one value per dimension");
    return out;
  }
  throw ConfigError(field, "expected a number or an array of numbers");
}

const json& require(const json& node, const char* key, const char* field) {
  if (!node.is_object() || !node.contains(key)) throw ConfigError(field, "missing");
  return node.at(key);
}

std::vector<std::vector<double>> coefficient_lists(const json& node, const char* field) {
  if (!node.is_array()) throw ConfigError(field, "expected a list of coefficient lists");
  std::vector<std::vector<double>> out;
  for (const auto& arm : node) {
    if (!arm.is_array()) throw ConfigError(field, "expected a list of coefficient lists");
    std::vector<double> c;
    for (const auto& v : arm) {
      if (!v.is_number()) throw ConfigError(field, "coefficients must be numbers");
      c.push_back(v.get<double>());
    }
    out.push_back(std::move(c));
  }
  return out;
}

CovariateLaw covariate_from_json(const json& node) {
  if (!node.is_object()) throw ConfigError("covariate", "expected an object");
  const std::string kind = require(node, "kind", "covariate.kind").get<std::string>();
  std::size_t dim = 1;
  if (node.contains("dimension")) {
    const auto& d = node.at("dimension");
    if (!d.is_number_integer() || d.get<long long>() < 1)
      throw ConfigError("covariate.dimension", "must be a positive integer");
    dim = d.get<std::size_t>();
  }
  if (kind == "gaussian") {
    return CovariateLaw::gaussian(
        param_from_json(require(node, "mean", "covariate.mean"), dim, "covariate.mean"),
        param_from_json(require(node, "variance", "covariate.variance"), dim,
                        "covariate.variance"));
  }
  if (kind == "uniform") {
    return CovariateLaw::uniform(
        param_from_json(require(node, "lo", "covariate.lo"), dim, "covariate.lo"),
        param_from_json(require(node, "hi", "covariate.hi"), dim, "covariate.hi"));
  }
  if (kind == "empirical") {
    const auto& pts = require(node, "points", "covariate.points");
    if (!pts.is_array()) throw ConfigError("covariate.points", "expected an array");
    std::vector<Covariate> points;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::string field = "covariate.points[" + std::to_string(i) + "]";
      if (pts[i].is_number()) {
        points.push_back({pts[i].get<double>()});
      } else if (pts[i].is_array()) {
        Covariate x;
        for (const auto& v : pts[i]) {
          if (!v.is_number()) throw ConfigError(field, "values must be numbers");
          x.push_back(v.get<double>());
        }
        points.push_back(std::move(x));
      } else {
        throw ConfigError(field, "expected a number or an array");
      }
    }
    CovariateLaw law = CovariateLaw::empirical(points);
    if (node.contains("dimension") && law.dimension() != dim)
      throw ConfigError("covariate.points[0]", "does not match covariate.dimension");
    return law;
  }
  throw ConfigError("covariate.kind", "unknown kind '" + kind + "'");
}

NoiseFamily noise_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseFamily::gaussian;
  if (s == "uniform") return NoiseFamily::uniform;
  if (s == "laplace") return NoiseFamily::laplace;
  if (s == "none") return NoiseFamily::none;
  throw ConfigError("outcome.noise", "unknown noise family '" + s + "'");
}

}  // namespace

nlohmann::json scenario_to_json(const Scenario& s) {
  json cov;
  cov["kind"] = to_string(s.q.kind());
  cov["dimension"] = s.q.dimension();
  switch (s.q.kind()) {
    case CovariateKind::gaussian:
      cov["mean"] = param_to_json(s.q.first_param());
      cov["variance"] = param_to_json(s.q.second_param());
      break;
    case CovariateKind::uniform:
      cov["lo"] = param_to_json(s.q.first_param());
      cov["hi"] = param_to_json(s.q.second_param());
      break;
    case CovariateKind::empirical: {
      json pts = json::array();
      for (std::size_t i = 0; i < s.q.points().size(); ++i) {
        const Point p = s.q.points()[i];
        pts.push_back(std::vector<double>(p.begin(), p.end()));
      }
      cov["points"] = std::move(pts);
      break;
    }
  }
  json mu, sigma2;
  const auto& ms = s.outcome.mean_spec();
  if (!ms.builtin.empty()) mu["builtin"] = ms.builtin;
  else mu["polynomial"] = ms.coefficients;
  const auto& vs = s.outcome.variance_spec();
  if (!vs.builtin.empty()) sigma2["builtin"] = vs.builtin;
  else sigma2["polynomial"] = vs.coefficients;

  json doc;
  doc["covariate"] = std::move(cov);
  doc["outcome"] = {{"mu", mu}, {"sigma2", sigma2}, {"noise", to_string(s.outcome.noise())}};
  doc["num_treatments"] = s.num_treatments;
  doc["clamp"] = {{"lo", s.clamp.lo}, {"hi", s.clamp.hi}};
  if (s.true_ate) doc["true_ate"] = *s.true_ate;
  else doc["true_ate"] = "unknown";
  return doc;
}

Scenario scenario_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("scenario", "expected a JSON object");
  try {
    CovariateLaw q = covariate_from_json(require(doc, "covariate", "covariate"));
    const json& outcome = require(doc, "outcome", "outcome");

    MeanSpec mean;
    const json& mu = require(outcome, "mu", "outcome.mu");
    if (mu.is_object() && mu.contains("builtin")) mean.builtin = mu.at("builtin").get<std::string>();
    else if (mu.is_object() && mu.contains("polynomial"))
      mean.coefficients = coefficient_lists(mu.at("polynomial"), "outcome.mu.polynomial");
    else throw ConfigError("outcome.mu", "expected 'builtin' or 'polynomial'");

    VarianceSpec variance;
    const json& s2 = require(outcome, "sigma2", "outcome.sigma2");
    if (s2.is_object() && s2.contains("builtin"))
      variance.builtin = s2.at("builtin").get<std::string>();
    else if (s2.is_object() && s2.contains("polynomial"))
      variance.coefficients = coefficient_lists(s2.at("polynomial"), "outcome.sigma2.polynomial");
    else throw ConfigError("outcome.sigma2", "expected 'builtin' or 'polynomial'");

    NoiseFamily noise = NoiseFamily::gaussian;
    if (outcome.contains("noise")) noise = noise_from_string(outcome.at("noise").get<std::string>());

    std::size_t k = 2;
    if (doc.contains("num_treatments")) {
      const auto& n = doc.at("num_treatments");
      if (!n.is_number_integer() || n.get<long long>() < 2)
        throw ConfigError("num_treatments", "must be an integer of at least 2");
      k = n.get<std::size_t>();
    }

    Clamp clamp;
    if (doc.contains("clamp")) {
      const json& c = doc.at("clamp");
      clamp.lo = require(c, "lo", "clamp.lo").get<double>();
      clamp.hi = require(c, "hi", "clamp.hi").get<double>();
    }

    std::optional<double> ate;
    bool compute = true;
    if (doc.contains("true_ate")) {
      const json& t = doc.at("true_ate");
      if (t.is_number()) ate = t.get<double>();
      else if (t.is_string() && t.get<std::string>() == "unknown") compute = false;
      else throw ConfigError("true_ate", "expected a number or \"unknown\"");
    }
    return make_scenario(std::move(q), std::move(mean), std::move(variance), noise, k, clamp,
                         ate, compute);
  } catch (const json::exception& e) {
    throw ConfigError("scenario", std::string("malformed value: ") + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario", "parse error in " + path.string() + ": " + e.what());
  }
  return scenario_from_json(doc);
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write scenario file " + path.string());
  out << scenario_to_json(scenario).dump(2) << '\n';
}

}  // namespace aaexp
