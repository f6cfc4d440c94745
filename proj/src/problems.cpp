#include "dro/problems.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

#include <boost/tokenizer.hpp>

#include "dro/reductions.hpp"
#include "dro/rng.hpp"

namespace dro::problems {
namespace {

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// d/dmargin log(1 + exp(-margin)) = -sigmoid(-margin).
double logistic_slope(double margin) { return -sigmoid(-margin); }

}  // namespace

LossSet logistic_losses(const TabularDataset& data) {
  data.validate();
  if (data.rows() == 0) throw std::invalid_argument("logistic_losses: empty dataset");
  LossSet out;
  out.m = data.rows();
  out.dim = data.cols();
  out.eval = [Z = data.features, y = data.labels](Index i, const Vector& x, Vector* grad) {
    const auto r = static_cast<Eigen::Index>(i);
    if (x.size() != Z.cols()) throw std::invalid_argument("logistic loss: parameter dimension mismatch");
    const double margin = y(r) * Z.row(r).dot(x);
    if (grad) *grad = (logistic_slope(margin) * y(r)) * Z.row(r).transpose();
    return reductions::logistic_loss(margin);
  };
  return out;
}

LossSet quadratic_losses(const Matrix& A, const Vector& b) {
  if (A.rows() != b.size() || A.rows() == 0) throw std::invalid_argument("quadratic_losses: shape mismatch");
  LossSet out;
  out.m = static_cast<Index>(A.rows());
  out.dim = static_cast<Index>(A.cols());
  out.eval = [A, b](Index i, const Vector& x, Vector* grad) {
    const auto r = static_cast<Eigen::Index>(i);
    if (x.size() != A.cols()) throw std::invalid_argument("quadratic loss: parameter dimension mismatch");
    const double res = A.row(r).dot(x) - b(r);
    if (grad) *grad = res * A.row(r).transpose();
    return 0.5 * res * res;
  };
  return out;
}

Index mlp2_dim(Index d, Index hidden) { return hidden * d + 2 * hidden + 1; }

namespace {

struct Mlp2View {
  Eigen::Map<const Matrix> W1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const Vector> w2;
  double b2;

  Mlp2View(const Vector& p, Eigen::Index d, Eigen::Index h)
      : W1(p.data(), h, d), b1(p.data() + h * d, h), w2(p.data() + h * d + h, h), b2(p(h * d + 2 * h)) {}
};

}  // namespace

double mlp2_output(const Vector& params, const Vector& z, Index hidden) {
  const auto h = static_cast<Eigen::Index>(hidden);
  const Mlp2View net(params, z.size(), h);
  const Vector act = (net.W1 * z + net.b1).array().tanh();
  return net.w2.dot(act) + net.b2;
}

LossSet mlp2_losses(const TabularDataset& data, Index hidden) {
  data.validate();
  if (data.rows() == 0 || hidden == 0) throw std::invalid_argument("mlp2_losses: empty dataset or no hidden units");
  LossSet out;
  out.m = data.rows();
  out.dim = mlp2_dim(data.cols(), hidden);
  const auto h = static_cast<Eigen::Index>(hidden);
  out.eval = [Z = data.features, y = data.labels, h, dim = out.dim](Index i, const Vector& x, Vector* grad) {
    if (static_cast<Index>(x.size()) != dim) throw std::invalid_argument("mlp2 loss: parameter dimension mismatch");
    const auto r = static_cast<Eigen::Index>(i);
    const auto d = Z.cols();
    const Mlp2View net(x, d, h);
    const Vector z = Z.row(r).transpose();
    const Vector act = (net.W1 * z + net.b1).array().tanh();
    const double out_val = net.w2.dot(act) + net.b2;
    const double margin = y(r) * out_val;
    if (grad) {
      grad->resize(x.size());
      const double dout = logistic_slope(margin) * y(r);
      const Vector delta = (dout * net.w2.array() * (1.0 - act.array().square())).matrix();
      Eigen::Map<Matrix>(grad->data(), h, d) = delta * z.transpose();
      grad->segment(h * d, h) = delta;
      grad->segment(h * d + h, h) = dout * act;
      (*grad)(h * d + 2 * h) = dout;
    }
    return reductions::logistic_loss(margin);
  };
  return out;
}

LossSet make_losses(LossKind kind, const TabularDataset& data, Index hidden) {
  switch (kind) {
    case LossKind::Logistic: return logistic_losses(data);
    case LossKind::Quadratic: return quadratic_losses(data.features, data.labels);
    case LossKind::Mlp2: return mlp2_losses(data, hidden);
  }
  throw std::invalid_argument("make_losses: unknown kind");
}

CompositeProblem erm_problem(const LossSet& losses, SimpleTerm r) {
  CompositeProblem p;
  p.dim_x = losses.dim;
  p.dim_g = 1;
  p.m = losses.m;
  p.r = std::move(r);
  p.name = "erm";
  const auto d = static_cast<Eigen::Index>(losses.dim);
  p.g = [d](Index, const Vector&, Vector& value, Matrix* jac) {
    value = Vector::Zero(1);
    if (jac) jac->setZero(1, d);
  };
  p.h = [losses](Index i, const Vector& x, Vector* grad) { return losses.eval(i, x, grad); };
  p.f = [](const Vector&, Vector* deriv) {
    if (deriv) deriv->setZero(1);
    return 0.0;
  };
  p.validate();
  return p;
}

SimpleTerm smooth_term(const LossSet& losses, double L, Index iters, double tol) {
  if (!(L > 0)) throw std::invalid_argument("smooth_term: L must be positive");
  auto value = [losses](const Vector& x) {
    double s = 0;
    for (Index i = 0; i < losses.m; ++i) s += losses.eval(i, x, nullptr);
    return s / static_cast<double>(losses.m);
  };
  auto gradient = [losses](const Vector& x) {
    Vector g = Vector::Zero(x.size()), gi;
    for (Index i = 0; i < losses.m; ++i) {
      losses.eval(i, x, &gi);
      g += gi;
    }
    return Vector(g / static_cast<double>(losses.m));
  };
  auto prox = [gradient, L, iters, tol](double eta, const Vector& v) {
    if (eta == 0) return v;
    const double step = 1.0 / (L + 1.0 / eta);
    Vector y = v;
    for (Index k = 0; k < iters; ++k) {
      const Vector move = step * (gradient(y) + (y - v) / eta);
      y -= move;
      if (move.norm() <= tol * (1.0 + y.norm())) break;
    }
    return y;
  };
  return SimpleTerm::custom(value, prox, gradient, "mean-loss");
}

ScoreModel linear_scores(const TabularDataset& data) {
  ScoreModel s;
  s.m = data.rows();
  s.dim = data.cols();
  s.score = [Z = data.features](Index i, const Vector& x, Vector* grad) {
    const auto r = static_cast<Eigen::Index>(i);
    if (grad) *grad = Z.row(r).transpose();
    return Z.row(r).dot(x);
  };
  return s;
}

constraints::ConstraintSet build_fairness_constraints(const TabularDataset& data, const ScoreModel& model,
                                                      const FairnessSpec& spec) {
  data.validate();
  if (!data.has_groups()) throw std::invalid_argument("fairness constraints need group ids");
  if (!(spec.eps_slack >= 0)) throw std::invalid_argument("fairness: eps_slack must be nonnegative");
  if (!(spec.surrogate_temp > 0)) throw std::invalid_argument("fairness: surrogate_temp must be positive");
  if (spec.proxy_copies < 1) throw std::invalid_argument("fairness: proxy_copies must be at least 1");
  if (model.m != data.rows()) throw std::invalid_argument("fairness: score model row count mismatch");

  std::vector<int> groups = spec.groups;
  if (groups.empty()) {
    const std::set<int> present(data.groups.begin(), data.groups.end());
    groups.assign(present.begin(), present.end());
  }
  std::vector<Index> positives;
  for (Index i = 0; i < data.rows(); ++i) {
    if (data.labels(static_cast<Eigen::Index>(i)) > 0) positives.push_back(i);
  }
  std::vector<double> group_size;
  for (int g : groups) {
    double n = 0;
    for (Index i : positives) n += data.groups[i] == g ? 1 : 0;
    if (n == 0) throw std::invalid_argument("fairness: group " + std::to_string(g) + " has no positive rows");
    group_size.push_back(n);
  }
  if (positives.empty()) throw std::invalid_argument("fairness: no positive rows");

  constraints::ConstraintSet set;
  set.m = groups.size() * spec.proxy_copies;
  set.dim = model.dim;
  set.kinds.assign(set.m, constraints::ConstraintKind::General);
  const double temp = spec.surrogate_temp;
  const double eps = spec.eps_slack;
  const double n_all = static_cast<double>(positives.size());
  const Index copies = spec.proxy_copies;
  set.eval = [model, row_groups = data.groups, groups, group_size, positives, temp, eps, n_all, copies](
                 Index k, const Vector& x, Vector* grad) {
    const Index gi = k / copies;
    const int g = groups[gi];
    const double n_g = group_size[gi];
    double value = -eps;
    Vector sg;
    if (grad) grad->setZero(x.size());
    for (Index i : positives) {
      const double coef = 1.0 / n_all - (row_groups[i] == g ? 1.0 / n_g : 0.0);
      if (coef == 0) continue;
      const double s = model.score(i, x, grad ? &sg : nullptr);
      const double sig = sigmoid(temp * s);
      value += coef * sig;
      if (grad) *grad += (coef * temp * sig * (1.0 - sig)) * sg;
    }
    return value;
  };
  return set;
}

namespace {

template <class Rate>
double rate_over_positives(const TabularDataset& data, int group, Rate&& rate) {
  double num = 0, den = 0;
  for (Index i = 0; i < data.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (data.labels(r) <= 0) continue;
    if (group >= 0 && data.groups[i] != group) continue;
    num += rate(r);
    den += 1;
  }
  if (den == 0) throw std::invalid_argument("tpr: no positive rows in group " + std::to_string(group));
  return num / den;
}

}  // namespace

double true_positive_rate(const TabularDataset& data, const Vector& scores, int group) {
  return rate_over_positives(data, group, [&](Eigen::Index r) { return scores(r) > 0 ? 1.0 : 0.0; });
}

double surrogate_tpr(const TabularDataset& data, const Vector& scores, int group, double temp) {
  return rate_over_positives(data, group, [&](Eigen::Index r) { return sigmoid(temp * scores(r)); });
}

double fairness_violation(const TabularDataset& data, const Vector& scores, double eps) {
  const double all = true_positive_rate(data, scores, -1);
  const std::set<int> present(data.groups.begin(), data.groups.end());
  double worst = 0;
  for (int g : present) worst = std::max(worst, all - true_positive_rate(data, scores, g) - eps);
  return worst;
}

double accuracy(const TabularDataset& data, const Vector& scores) {
  double hits = 0;
  for (Eigen::Index r = 0; r < scores.size(); ++r) hits += ((scores(r) > 0 ? 1.0 : -1.0) == data.labels(r)) ? 1 : 0;
  return hits / static_cast<double>(scores.size());
}

Vector linear_score_vector(const TabularDataset& data, const Vector& x) { return data.features * x; }

TabularDataset ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_csv: cannot open " + path);
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    Tokenizer tok(line);
    for (auto& c : tok) {
      const auto b = c.find_first_not_of(" \t\r");
      const auto e = c.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? std::string() : c.substr(b, e - b + 1));
    }
    return cells;
  };

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("ingest_csv: " + path + " has no header row");
  const std::vector<std::string> header = split(line);
  auto column = [&](const std::string& name) -> Index {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("ingest_csv: unknown column '" + name + "'");
    return static_cast<Index>(it - header.begin());
  };
  if (schema.label.empty()) throw std::invalid_argument("ingest_csv: schema needs a label column");
  const Index label_col = column(schema.label);
  const bool has_group = !schema.group.empty();
  const Index group_col = has_group ? column(schema.group) : header.size();
  std::vector<Index> feature_cols;
  std::vector<std::string> names;
  if (schema.features.empty()) {
    for (Index c = 0; c < header.size(); ++c) {
      if (c == label_col || c == group_col) continue;
      feature_cols.push_back(c);
      names.push_back(header[c]);
    }
  } else {
    for (const auto& f : schema.features) {
      feature_cols.push_back(column(f));
      names.push_back(f);
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  std::vector<int> groups;
  std::map<std::string, int> group_ids;
  Index line_no = 1;
  auto parse = [&](const std::string& cell, Index col) {
    double v = 0;
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
      throw std::runtime_error("ingest_csv: line " + std::to_string(line_no) + ", column '" + header[col] +
                               "': not a finite number: '" + cell + "'");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("ingest_csv: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                               " fields, expected " + std::to_string(header.size()));
    }
    std::vector<double> row;
    for (Index c : feature_cols) row.push_back(parse(cells[c], c));
    rows.push_back(std::move(row));
    if (schema.positive_label.empty()) {
      labels.push_back(parse(cells[label_col], label_col) > 0 ? 1.0 : -1.0);
    } else {
      labels.push_back(cells[label_col] == schema.positive_label ? 1.0 : -1.0);
    }
    if (has_group) {
      const std::string& gcell = cells[group_col];
      int id = 0;
      auto [ptr, ec] = std::from_chars(gcell.data(), gcell.data() + gcell.size(), id);
      if (ec != std::errc() || ptr != gcell.data() + gcell.size() || id < 0) {
        const auto it = group_ids.try_emplace(gcell, static_cast<int>(group_ids.size())).first;
        id = it->second;
      }
      groups.push_back(id);
    }
  }

  TabularDataset data;
  const auto m = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(feature_cols.size());
  data.features.resize(m, d);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) data.features(r, c) = rows[static_cast<Index>(r)][static_cast<Index>(c)];
  }
  data.labels = Eigen::Map<const Vector>(labels.data(), m);
  data.groups = std::move(groups);
  data.feature_names = std::move(names);
  if (schema.standardize && m > 0) {
    for (Eigen::Index c = 0; c < d; ++c) {
      auto col = data.features.col(c);
      col.array() -= col.mean();
      const double sd = m > 1 ? std::sqrt(col.squaredNorm() / static_cast<double>(m - 1)) : 0.0;
      if (sd > 0) col /= sd;
    }
  }
  data.validate();
  return data;
}

QuadraticFixture make_quadratic(Index m, Index d, std::uint64_t seed, double kappa) {
  if (m < d || d == 0) throw std::invalid_argument("make_quadratic: need m >= d >= 1");
  Rng rng(derive_seed(seed, 0x71756164ULL));
  std::normal_distribution<double> normal;
  const auto M = static_cast<Eigen::Index>(m);
  const auto D = static_cast<Eigen::Index>(d);
  auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
    Matrix G(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) G(i, j) = normal(rng);
    return G;
  };
  const Matrix Q = Eigen::HouseholderQR<Matrix>(gaussian(M, D)).householderQ() * Matrix::Identity(M, D);
  const Matrix V = Eigen::HouseholderQR<Matrix>(gaussian(D, D)).householderQ() * Matrix::Identity(D, D);
  QuadraticFixture fx;
  fx.eigenvalues = Vector::LinSpaced(D, 1.0, kappa);
  fx.A = std::sqrt(static_cast<double>(m)) * Q * fx.eigenvalues.cwiseSqrt().asDiagonal() * V.transpose();
  const Vector x_true = gaussian(D, 1);
  fx.b = fx.A * x_true + 0.5 * gaussian(M, 1);
  fx.x_star = (fx.A.transpose() * fx.A).ldlt().solve(fx.A.transpose() * fx.b);
  return fx;
}

Vector fit_logistic(const TabularDataset& data, double ridge, Index iters) {
  const auto d = static_cast<Eigen::Index>(data.cols());
  const double m = static_cast<double>(data.rows());
  const Matrix& Z = data.features;
  auto objective = [&](const Vector& x) {
    double s = 0;
    const Vector margins = data.labels.cwiseProduct(Z * x);
    for (Eigen::Index i = 0; i < margins.size(); ++i) s += reductions::logistic_loss(margins(i));
    return s / m + 0.5 * ridge * x.squaredNorm();
  };
  Vector x = Vector::Zero(d);
  for (Index it = 0; it < iters; ++it) {
    const Vector margins = data.labels.cwiseProduct(Z * x);
    Vector coef(margins.size()), curv(margins.size());
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
      const double s = sigmoid(-margins(i));
      coef(i) = -s * data.labels(i);
      curv(i) = s * (1.0 - s);
    }
    const Vector grad = Z.transpose() * coef / m + ridge * x;
    if (grad.norm() < 1e-12) break;
    const Matrix H = Z.transpose() * curv.asDiagonal() * Z / m + ridge * Matrix::Identity(d, d);
    const Vector step = -H.ldlt().solve(grad);
    const double f0 = objective(x);
    double t = 1.0;
    while (t > 1e-10 && objective(x + t * step) > f0 + 1e-4 * t * grad.dot(step)) t *= 0.5;
    x += t * step;
  }
  return x;
}

TabularDataset make_two_group_bias(Index m, Index d, std::uint64_t seed, double min_gap) {
  if (m < 20 || d == 0) throw std::invalid_argument("make_two_group_bias: need m >= 20 and d >= 1");
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    Rng rng(derive_seed(seed, attempt));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    TabularDataset data;
    const auto M = static_cast<Eigen::Index>(m);
    const auto D = static_cast<Eigen::Index>(d);
    data.features = Matrix::Zero(M, D + 2);
    data.labels.resize(M);
    data.groups.resize(m);
    for (Eigen::Index i = 0; i < M; ++i) {
      const int g = unif(rng) < 0.3 ? 1 : 0;
      const double base_rate = g == 0 ? 0.5 : 0.25;
      const double y = unif(rng) < base_rate ? 1.0 : -1.0;
      data.labels(i) = y;
      data.groups[static_cast<Index>(i)] = g;
      data.features(i, 0) = y + normal(rng);
      for (Eigen::Index c = 1; c < D; ++c) data.features(i, c) = normal(rng);
      data.features(i, D + g) = 1.0;
    }
    for (Eigen::Index c = 0; c < D; ++c) data.feature_names.push_back("x" + std::to_string(c));
    data.feature_names.push_back("group0");
    data.feature_names.push_back("group1");
    bool ok = true;
    for (int g : {0, 1}) {
      bool any = false;
      for (Index i = 0; i < m; ++i) any = any || (data.groups[i] == g && data.labels(static_cast<Eigen::Index>(i)) > 0);
      ok = ok && any;
    }
    if (!ok) continue;
    const Vector x = fit_logistic(data, 1e-4);
    const Vector scores = linear_score_vector(data, x);
    if (fairness_violation(data, scores, 0.0) >= min_gap) return data;
  }
  throw std::runtime_error("make_two_group_bias: could not plant the requested tpr gap");
}

TabularDataset make_nonconvex_toy(Index m, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x786f72ULL));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_real_distribution<double> coin;
  TabularDataset data;
  const auto M = static_cast<Eigen::Index>(m);
  data.features.resize(M, 2);
  data.labels.resize(M);
  for (Eigen::Index i = 0; i < M; ++i) {
    data.features(i, 0) = unif(rng);
    data.features(i, 1) = unif(rng);
    double y = data.features(i, 0) * data.features(i, 1) > 0 ? 1.0 : -1.0;
    if (coin(rng) < 0.1) y = -y;
    data.labels(i) = y;
  }
  data.feature_names = {"u", "v"};
  return data;
}

SyntheticData make_synthetic(SyntheticKind kind, Index m, Index d, std::uint64_t seed) {
  SyntheticData out;
  switch (kind) {
    case SyntheticKind::TwoGroupBias:
      out.data = make_two_group_bias(m, d, seed);
      break;
    case SyntheticKind::StronglyConvexQuadratic:
      out.quadratic = make_quadratic(m, d, seed);
      out.data.features = out.quadratic.A;
      out.data.labels = Vector::Ones(static_cast<Eigen::Index>(m));
      break;
    case SyntheticKind::NonconvexToy:
      out.data = make_nonconvex_toy(m, seed);
      break;
  }
  return out;
}

}  // namespace dro::problems
