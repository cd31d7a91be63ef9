#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pafl/numerics.hpp"
#include "pafl/rng.hpp"

namespace pafl {

enum class TaskKind { kQuadratic, kLogistic };

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

// Least-squares client: population loss f(w) = 0.5*||A w - b||^2 / m.
// Stochastic gradients carry additive noise s*z with z ~ N(0, I_d), so the
// Hessian A^T A / m is sample-independent (rho = 0, sigma_h = 0) and
// sigma_g^2 = s^2 * d exactly.
struct QuadraticSpec {
  Eigen::MatrixXd A;       // m x d
  Eigen::VectorXd b;       // m
  Eigen::MatrixXd H;       // A^T A / m, cached
  Eigen::VectorXd w_star;  // population minimizer; b = A w_star by construction
};

// Binary logistic client over a fixed finite sample pool, so population
// quantities are exact pool averages.  Label skew across clients comes from
// the per-client class prior.
struct LogisticSpec {
  double prior_pos = 0.5;  // p(y = +1)
  Eigen::MatrixXd X;       // pool features, N x d
  Eigen::VectorXd y;       // pool labels, +1/-1
};

struct ClientTask {
  int client_id = 0;
  TaskKind kind = TaskKind::kQuadratic;
  int dim = 0;
  double noise_scale = 0.0;  // s, quadratic gradient-noise scale
  QuadraticSpec quad;
  LogisticSpec logi;
};

using Fleet = std::vector<ClientTask>;

// Samples are stored by content so a frozen batch can be re-evaluated at any
// w (the finite-difference oracles depend on that).
struct DataBatch {
  std::vector<Vec> noise;    // quadratic: one z per sample
  std::vector<int> indices;  // logistic: pool indices
  std::size_t size() const { return noise.empty() ? indices.size() : noise.size(); }
};

struct TaskConstants {
  double L = 0.0;
  double sigma_g = 0.0;
  double gamma_g = 0.0;
  double G = std::numeric_limits<double>::infinity();  // unbounded on R^d
  double rho = 0.0;
  double sigma_h = 0.0;
  double gamma_h = 0.0;
  double f_star = 0.0;
  bool analytic = false;  // provenance: analytic vs estimated
};

struct FleetOptions {
  int rows = 0;                   // quadratic: m; 0 means rows = dim
  double l_target = 1.0;          // largest Hessian eigenvalue
  double cond = 10.0;             // spectrum spread lambda_max / lambda_min
  bool identity_hessian = false;  // H = L * I (condition number 1)
  double noise_scale = 0.0;
  int pool_size = 200;  // logistic pool per client
};

// n tasks sharing one Hessian structure; per-client minimizers are spread as
// w_i* = w_bar + heterogeneity * u_i with u_i on the unit sphere, so the
// population-diversity constant is available in closed form.
Fleet make_fleet(TaskKind kind, int n, double heterogeneity, int dim, RngStream& rng,
                 const FleetOptions& opts = {});

DataBatch sample_batch(const ClientTask& task, int size, RngStream& rng);

double batch_loss(const ClientTask& task, const Vec& w, const DataBatch& batch);
Vec batch_grad(const ClientTask& task, const Vec& w, const DataBatch& batch);
Vec batch_hvp(const ClientTask& task, const Vec& w, const Vec& v, const DataBatch& batch);

double population_loss(const ClientTask& task, const Vec& w);
Vec population_grad(const ClientTask& task, const Vec& w);
Vec population_hvp(const ClientTask& task, const Vec& w, const Vec& v);

// Exact constants for quadratic fleets; Monte-Carlo estimates (probe_count
// draws) for logistic.
TaskConstants measure_constants(const Fleet& fleet, int probe_count, RngStream& rng);

// Largest smoothness constant across the fleet.
double fleet_global_L(const Fleet& fleet);

// Minimizer of the averaged population loss.
Vec global_minimizer(const Fleet& fleet);

// Average squared deviation of client gradients from the global gradient,
// evaluated at w.
double diversity_at(const Fleet& fleet, const Vec& w);

// Replayable structured-text (JSON) fleet round trip.
std::string serialize_fleet(const Fleet& fleet);
Fleet deserialize_fleet(const std::string& text);

// Eigen interop
Eigen::VectorXd to_eigen(const Vec& v);
Vec from_eigen(const Eigen::VectorXd& v);

}  // namespace pafl
