#include "pafl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

namespace pafl {

using json = nlohmann::json;

std::string to_string(TaskKind k) {
  return k == TaskKind::kQuadratic ? "quadratic" : "logistic";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "quadratic") return TaskKind::kQuadratic;
  if (s == "logistic") return TaskKind::kLogistic;
  throw NumericsError("unknown task kind: " + s);
}

Eigen::VectorXd to_eigen(const Vec& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

Vec from_eigen(const Eigen::VectorXd& v) {
  Vec out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v[i];
  return out;
}

namespace {

Eigen::MatrixXd random_orthogonal(int d, RngStream& rng) {
  Eigen::MatrixXd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.next_normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  return q;
}

Vec unit_sphere(int d, RngStream& rng) {
  Vec u(static_cast<std::size_t>(d));
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (auto& x : u) {
      x = rng.next_normal();
      n2 += x * x;
    }
  } while (n2 == 0.0);
  double inv = 1.0 / std::sqrt(n2);
  for (auto& x : u) x *= inv;
  return u;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(-m)) stable
double log1pexp_neg(double m) {
  if (m > 0) return std::log1p(std::exp(-m));
  return -m + std::log1p(std::exp(m));
}

}  // namespace

Fleet make_fleet(TaskKind kind, int n, double heterogeneity, int dim, RngStream& rng,
                 const FleetOptions& opts) {
  if (n < 1 || dim < 1) throw NumericsError("make_fleet: n and dim must be >= 1");
  if (heterogeneity < 0) throw NumericsError("make_fleet: heterogeneity must be >= 0");

  Fleet fleet;
  fleet.reserve(static_cast<std::size_t>(n));

  if (kind == TaskKind::kQuadratic) {
    int m = opts.rows > 0 ? opts.rows : dim;
    if (m < dim) throw NumericsError("make_fleet: rows must be >= dim");

    Eigen::VectorXd eigs(dim);
    if (opts.identity_hessian) {
      eigs.setConstant(opts.l_target);
    } else {
      double lmin = opts.l_target / std::max(opts.cond, 1.0);
      for (int j = 0; j < dim; ++j) {
        double frac = dim == 1 ? 1.0 : static_cast<double>(j) / (dim - 1);
        eigs[j] = lmin * std::pow(opts.l_target / lmin, frac);
      }
    }
    Eigen::MatrixXd v = opts.identity_hessian ? Eigen::MatrixXd::Identity(dim, dim)
                                              : random_orthogonal(dim, rng);
    Eigen::MatrixXd sqrt_h = v * eigs.cwiseSqrt().asDiagonal() * v.transpose();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, dim);
    a.topRows(dim) = std::sqrt(static_cast<double>(m)) * sqrt_h;
    Eigen::MatrixXd h = (a.transpose() * a) / static_cast<double>(m);

    Eigen::VectorXd w_bar(dim);
    for (int j = 0; j < dim; ++j) w_bar[j] = rng.next_normal();

    for (int i = 0; i < n; ++i) {
      ClientTask t;
      t.client_id = i;
      t.kind = kind;
      t.dim = dim;
      t.noise_scale = opts.noise_scale;
      t.quad.A = a;
      t.quad.H = h;
      Eigen::VectorXd u = to_eigen(unit_sphere(dim, rng));
      t.quad.w_star = w_bar + heterogeneity * u;
      t.quad.b = a * t.quad.w_star;
      fleet.push_back(std::move(t));
    }
    return fleet;
  }

  // logistic
  int pool = std::max(opts.pool_size, 2);
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(dim, 1.5 / std::sqrt(static_cast<double>(dim)));
  for (int i = 0; i < n; ++i) {
    ClientTask t;
    t.client_id = i;
    t.kind = kind;
    t.dim = dim;
    // deterministic skew ramp across clients so measured diversity is
    // monotone in the heterogeneity knob
    double xi = n == 1 ? 0.0 : 2.0 * static_cast<double>(i) / (n - 1) - 1.0;
    double prior = 0.5 + 0.5 * std::tanh(heterogeneity) * xi;
    t.logi.prior_pos = std::clamp(prior, 0.02, 0.98);
    t.logi.X.resize(pool, dim);
    t.logi.y.resize(pool);
    for (int s = 0; s < pool; ++s) {
      double label = rng.next_double() < t.logi.prior_pos ? 1.0 : -1.0;
      t.logi.y[s] = label;
      for (int j = 0; j < dim; ++j) t.logi.X(s, j) = label * mu[j] + rng.next_normal();
    }
    fleet.push_back(std::move(t));
  }
  return fleet;
}

DataBatch sample_batch(const ClientTask& task, int size, RngStream& rng) {
  if (size < 1) throw NumericsError("sample_batch: size must be >= 1");
  DataBatch batch;
  if (task.kind == TaskKind::kQuadratic) {
    batch.noise.reserve(static_cast<std::size_t>(size));
    for (int s = 0; s < size; ++s) {
      Vec z(static_cast<std::size_t>(task.dim));
      for (auto& x : z) x = rng.next_normal();
      batch.noise.push_back(std::move(z));
    }
  } else {
    batch.indices.reserve(static_cast<std::size_t>(size));
    auto pool = static_cast<std::uint64_t>(task.logi.X.rows());
    for (int s = 0; s < size; ++s)
      batch.indices.push_back(static_cast<int>(rng.next_below(pool)));
  }
  return batch;
}

double population_loss(const ClientTask& task, const Vec& w) {
  Eigen::VectorXd we = to_eigen(w);
  if (task.kind == TaskKind::kQuadratic) {
    Eigen::VectorXd r = we - task.quad.w_star;
    return 0.5 * r.dot(task.quad.H * r);
  }
  double s = 0.0;
  Eigen::VectorXd margins = task.logi.X * we;
  for (Eigen::Index i = 0; i < margins.size(); ++i)
    s += log1pexp_neg(task.logi.y[i] * margins[i]);
  return s / static_cast<double>(margins.size());
}

Vec population_grad(const ClientTask& task, const Vec& w) {
  Eigen::VectorXd we = to_eigen(w);
  if (task.kind == TaskKind::kQuadratic) {
    Vec g = from_eigen(task.quad.H * (we - task.quad.w_star));
    require_finite(g, "population_grad");
    return g;
  }
  Eigen::VectorXd margins = task.logi.X * we;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(task.dim);
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    double c = -task.logi.y[i] * sigmoid(-task.logi.y[i] * margins[i]);
    g += c * task.logi.X.row(i).transpose();
  }
  g /= static_cast<double>(margins.size());
  Vec out = from_eigen(g);
  require_finite(out, "population_grad");
  return out;
}

Vec population_hvp(const ClientTask& task, const Vec& w, const Vec& v) {
  Eigen::VectorXd ve = to_eigen(v);
  if (task.kind == TaskKind::kQuadratic) return from_eigen(task.quad.H * ve);
  Eigen::VectorXd we = to_eigen(w);
  Eigen::VectorXd margins = task.logi.X * we;
  Eigen::VectorXd xv = task.logi.X * ve;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(task.dim);
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    double p = sigmoid(margins[i]);
    out += p * (1.0 - p) * xv[i] * task.logi.X.row(i).transpose();
  }
  out /= static_cast<double>(margins.size());
  return from_eigen(out);
}

double batch_loss(const ClientTask& task, const Vec& w, const DataBatch& batch) {
  if (task.kind == TaskKind::kQuadratic) {
    double base = population_loss(task, w);
    double lin = 0.0;
    for (const auto& z : batch.noise) lin += dot(z, w);
    lin /= static_cast<double>(batch.noise.size());
    return base + task.noise_scale * lin;
  }
  Eigen::VectorXd we = to_eigen(w);
  double s = 0.0;
  for (int idx : batch.indices) {
    double m = task.logi.y[idx] * task.logi.X.row(idx).dot(we);
    s += log1pexp_neg(m);
  }
  return s / static_cast<double>(batch.indices.size());
}

Vec batch_grad(const ClientTask& task, const Vec& w, const DataBatch& batch) {
  if (task.kind == TaskKind::kQuadratic) {
    Vec g = population_grad(task, w);
    double inv = task.noise_scale / static_cast<double>(batch.noise.size());
    for (const auto& z : batch.noise) axpy_into(inv, z, g);
    require_finite(g, "batch_grad");
    return g;
  }
  Eigen::VectorXd we = to_eigen(w);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(task.dim);
  for (int idx : batch.indices) {
    double m = task.logi.y[idx] * task.logi.X.row(idx).dot(we);
    g += (-task.logi.y[idx] * sigmoid(-m)) * task.logi.X.row(idx).transpose();
  }
  g /= static_cast<double>(batch.indices.size());
  Vec out = from_eigen(g);
  require_finite(out, "batch_grad");
  return out;
}

Vec batch_hvp(const ClientTask& task, const Vec& w, const Vec& v, const DataBatch& batch) {
  if (task.kind == TaskKind::kQuadratic) {
    // additive gradient noise is linear in w, so the batch Hessian is exact
    return population_hvp(task, w, v);
  }
  Eigen::VectorXd we = to_eigen(w);
  Eigen::VectorXd ve = to_eigen(v);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(task.dim);
  for (int idx : batch.indices) {
    double m = task.logi.X.row(idx).dot(we);
    double p = sigmoid(m);
    out += p * (1.0 - p) * task.logi.X.row(idx).dot(ve) * task.logi.X.row(idx).transpose();
  }
  out /= static_cast<double>(batch.indices.size());
  Vec r = from_eigen(out);
  require_finite(r, "batch_hvp");
  return r;
}

double fleet_global_L(const Fleet& fleet) {
  double l = 0.0;
  for (const auto& t : fleet) {
    if (t.kind == TaskKind::kQuadratic) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t.quad.H);
      l = std::max(l, es.eigenvalues().maxCoeff());
    } else {
      // sigma''(z) <= 1/4, so (1/4N) X^T X dominates every pool Hessian
      Eigen::MatrixXd hb = (t.logi.X.transpose() * t.logi.X) /
                           (4.0 * static_cast<double>(t.logi.X.rows()));
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hb);
      l = std::max(l, es.eigenvalues().maxCoeff());
    }
  }
  return l;
}

Vec global_minimizer(const Fleet& fleet) {
  int d = fleet.front().dim;
  if (fleet.front().kind == TaskKind::kQuadratic) {
    Eigen::MatrixXd hs = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (const auto& t : fleet) {
      hs += t.quad.H;
      rhs += t.quad.H * t.quad.w_star;
    }
    return from_eigen(hs.ldlt().solve(rhs));
  }
  // gradient descent on the exact pool average
  double L = fleet_global_L(fleet);
  Vec w = zeros(static_cast<std::size_t>(d));
  for (int it = 0; it < 20000; ++it) {
    Vec g = zeros(w.size());
    for (const auto& t : fleet) axpy_into(1.0 / fleet.size(), population_grad(t, w), g);
    if (norm(g) < 1e-10) break;
    axpy_into(-1.0 / L, g, w);
  }
  return w;
}

double diversity_at(const Fleet& fleet, const Vec& w) {
  Vec mean = zeros(w.size());
  std::vector<Vec> grads;
  grads.reserve(fleet.size());
  for (const auto& t : fleet) {
    grads.push_back(population_grad(t, w));
    axpy_into(1.0 / fleet.size(), grads.back(), mean);
  }
  double s = 0.0;
  for (const auto& g : grads) s += norm_sq(sub(g, mean));
  return s / fleet.size();
}

TaskConstants measure_constants(const Fleet& fleet, int probe_count, RngStream& rng) {
  if (probe_count < 100) throw NumericsError("measure_constants: probe_count must be >= 100");
  TaskConstants c;
  c.L = fleet_global_L(fleet);
  int d = fleet.front().dim;

  if (fleet.front().kind == TaskKind::kQuadratic) {
    c.analytic = true;
    c.sigma_g = fleet.front().noise_scale * std::sqrt(static_cast<double>(d));
    Vec wbar = global_minimizer(fleet);
    c.gamma_g = std::sqrt(diversity_at(fleet, wbar));  // constant in w for shared H
    c.rho = 0.0;
    c.sigma_h = 0.0;
    // all clients share one Hessian
    c.gamma_h = 0.0;
    c.f_star = 0.0;
    return c;
  }

  c.analytic = false;
  int n_probes = std::max(probe_count / 20, 5);
  double sg2 = 0.0, gg2 = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    Vec w(static_cast<std::size_t>(d));
    for (auto& x : w) x = rng.next_normal();
    gg2 = std::max(gg2, diversity_at(fleet, w));
    for (const auto& t : fleet) {
      // exact single-sample gradient variance over the finite pool
      Vec pop = population_grad(t, w);
      Eigen::VectorXd we = to_eigen(w);
      double v = 0.0;
      for (Eigen::Index i = 0; i < t.logi.X.rows(); ++i) {
        double m = t.logi.y[i] * t.logi.X.row(i).dot(we);
        Eigen::VectorXd gi = (-t.logi.y[i] * sigmoid(-m)) * t.logi.X.row(i).transpose();
        v += (gi - to_eigen(pop)).squaredNorm();
      }
      sg2 = std::max(sg2, v / static_cast<double>(t.logi.X.rows()));
    }
  }
  c.sigma_g = std::sqrt(sg2);
  c.gamma_g = std::sqrt(gg2);
  // crude Hessian-curvature spread estimates from probe pairs
  double rho = 0.0, sh2 = 0.0;
  Vec v0(static_cast<std::size_t>(d), 0.0);
  v0[0] = 1.0;
  for (int p = 0; p < n_probes; ++p) {
    Vec w1(static_cast<std::size_t>(d)), w2(static_cast<std::size_t>(d));
    for (auto& x : w1) x = rng.next_normal();
    for (auto& x : w2) x = rng.next_normal();
    for (const auto& t : fleet) {
      double num = dist(population_hvp(t, w1, v0), population_hvp(t, w2, v0));
      rho = std::max(rho, num / std::max(dist(w1, w2), 1e-12));
    }
  }
  c.rho = rho;
  c.sigma_h = std::sqrt(sh2);
  // f_star: best per-client pool optimum
  double fs = std::numeric_limits<double>::infinity();
  for (const auto& t : fleet) {
    Vec w = zeros(static_cast<std::size_t>(d));
    for (int it = 0; it < 5000; ++it) {
      Vec g = population_grad(t, w);
      if (norm(g) < 1e-9) break;
      axpy_into(-1.0 / c.L, g, w);
    }
    fs = std::min(fs, population_loss(t, w));
  }
  c.f_star = fs;
  return c;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  auto rows = static_cast<Eigen::Index>(j.size());
  auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

}  // namespace

std::string serialize_fleet(const Fleet& fleet) {
  json out;
  out["kind"] = to_string(fleet.front().kind);
  out["dim"] = fleet.front().dim;
  json clients = json::array();
  for (const auto& t : fleet) {
    json c;
    c["client_id"] = t.client_id;
    c["noise_scale"] = t.noise_scale;
    if (t.kind == TaskKind::kQuadratic) {
      c["A"] = matrix_to_json(t.quad.A);
      c["b"] = vector_to_json(t.quad.b);
      c["w_star"] = vector_to_json(t.quad.w_star);
    } else {
      c["prior_pos"] = t.logi.prior_pos;
      c["X"] = matrix_to_json(t.logi.X);
      c["y"] = vector_to_json(t.logi.y);
    }
    clients.push_back(std::move(c));
  }
  out["clients"] = std::move(clients);
  return out.dump(1);
}

Fleet deserialize_fleet(const std::string& text) {
  json in = json::parse(text);
  TaskKind kind = task_kind_from_string(in.at("kind").get<std::string>());
  int dim = in.at("dim").get<int>();
  Fleet fleet;
  for (const auto& c : in.at("clients")) {
    ClientTask t;
    t.kind = kind;
    t.dim = dim;
    t.client_id = c.at("client_id").get<int>();
    t.noise_scale = c.at("noise_scale").get<double>();
    if (kind == TaskKind::kQuadratic) {
      t.quad.A = matrix_from_json(c.at("A"));
      t.quad.b = vector_from_json(c.at("b"));
      t.quad.w_star = vector_from_json(c.at("w_star"));
      t.quad.H = (t.quad.A.transpose() * t.quad.A) / static_cast<double>(t.quad.A.rows());
    } else {
      t.logi.prior_pos = c.at("prior_pos").get<double>();
      t.logi.X = matrix_from_json(c.at("X"));
      t.logi.y = vector_from_json(c.at("y"));
    }
    fleet.push_back(std::move(t));
  }
  return fleet;
}

}  // namespace pafl
