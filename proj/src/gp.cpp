#include "prefsdm/gp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "prefsdm/kernels.hpp"
#include "prefsdm/mathutil.hpp"

namespace prefsdm {

namespace {

// Jitter ladder: 0, then 1e-10*sigma2 escalating x10 up to 1e-6*sigma2.
constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-6;

std::vector<double> jitter_ladder(double sigma2) {
  std::vector<double> out{0.0};
  for (double j = kJitterStart; j <= kJitterMax * 1.0001; j *= 10.0) out.push_back(j * sigma2);
  return out;
}

void check_no_duplicates(std::span<const Location> sites, const char* what) {
  std::vector<std::pair<double, double>> coords;
  coords.reserve(sites.size());
  for (const auto& s : sites) coords.emplace_back(s.x, s.y);
  std::sort(coords.begin(), coords.end());
  if (std::adjacent_find(coords.begin(), coords.end()) != coords.end())
    throw NumericalError(std::string(what) + ": coincident sites make the covariance singular");
}

}  // namespace

void ExpCovParams::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw ValidationError("sigma2 must be strictly positive and finite");
  if (!(phi > 0.0) || !std::isfinite(phi))
    throw ValidationError("phi must be strictly positive and finite");
}

double exp_cov(const Location& a, const Location& b, const ExpCovParams& params) {
  params.validate();
  return params.sigma2 * std::exp(-params.phi * distance(a, b));
}

std::vector<int> NngpIndex::neighbor_sites(int pos) const {
  std::vector<int> out;
  out.reserve(n_nbr[pos]);
  for (int t = 0; t < n_nbr[pos]; ++t) out.push_back(order[nbr[pos * k + t]]);
  return out;
}

NngpIndex build_nngp_index(std::span<const Location> sites, int k, OrderingRule rule) {
  const int n = static_cast<int>(sites.size());
  if (k < 0) throw ValidationError("neighbor count k must be nonnegative");
  {
    std::vector<std::pair<double, double>> coords;
    coords.reserve(sites.size());
    for (const auto& s : sites) coords.emplace_back(s.x, s.y);
    std::sort(coords.begin(), coords.end());
    if (std::adjacent_find(coords.begin(), coords.end()) != coords.end())
      throw ValidationError("duplicate sites: coincident points break the conditioning");
  }

  NngpIndex idx;
  idx.k = k;
  idx.rule = rule;
  idx.order.resize(n);
  std::iota(idx.order.begin(), idx.order.end(), 0);

  if (rule == OrderingRule::lexicographic) {
    std::sort(idx.order.begin(), idx.order.end(), [&](int a, int b) {
      if (sites[a].x != sites[b].x) return sites[a].x < sites[b].x;
      return sites[a].y < sites[b].y;
    });
  } else {
    // max-min: start nearest the centroid, then repeatedly add the site
    // farthest from everything chosen so far
    Location centroid{0.0, 0.0};
    for (const auto& s : sites) {
      centroid.x += s.x / n;
      centroid.y += s.y / n;
    }
    std::vector<char> chosen(n, 0);
    std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
    int first = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const double d = distance(sites[i], centroid);
      if (d < best) {
        best = d;
        first = i;
      }
    }
    idx.order[0] = first;
    chosen[first] = 1;
    for (int i = 0; i < n; ++i)
      if (!chosen[i]) min_d[i] = distance(sites[i], sites[first]);
    for (int pos = 1; pos < n; ++pos) {
      int pick = -1;
      double far = -1.0;
      for (int i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        if (min_d[i] > far) {
          far = min_d[i];
          pick = i;
        }
      }
      idx.order[pos] = pick;
      chosen[pick] = 1;
      for (int i = 0; i < n; ++i)
        if (!chosen[i]) min_d[i] = std::min(min_d[i], distance(sites[i], sites[pick]));
    }
  }

  idx.rank.resize(n);
  for (int pos = 0; pos < n; ++pos) idx.rank[idx.order[pos]] = pos;

  idx.n_nbr.resize(n);
  idx.nbr.assign(static_cast<std::size_t>(n) * std::max(k, 1), -1);
  const auto& ops = kernels::ops();
  std::vector<double> xs(n), ys(n), d2(n);
  for (int pos = 0; pos < n; ++pos) {
    xs[pos] = sites[idx.order[pos]].x;
    ys[pos] = sites[idx.order[pos]].y;
  }
  std::vector<int> cand;
  for (int pos = 0; pos < n; ++pos) {
    const int m = std::min(pos, k);
    idx.n_nbr[pos] = m;
    if (m == 0) continue;
    ops.dist2_v(xs[pos], ys[pos], xs.data(), ys.data(), d2.data(), pos);
    cand.resize(pos);
    std::iota(cand.begin(), cand.end(), 0);
    // ties broken by position so the index is deterministic
    std::partial_sort(cand.begin(), cand.begin() + m, cand.end(), [&](int a, int b) {
      if (d2[a] != d2[b]) return d2[a] < d2[b];
      return a < b;
    });
    for (int t = 0; t < m; ++t) idx.nbr[static_cast<std::size_t>(pos) * k + t] = cand[t];
  }
  return idx;
}

double NngpFactor::log_det() const {
  double s = 0.0;
  for (double v : cond_var) s += std::log(v);
  return s;
}

NngpWorkspace::NngpWorkspace(std::span<const Location> sites, NngpIndex index)
    : index_(std::move(index)) {
  const int n = index_.n();
  const int k = index_.k;
  if (static_cast<int>(sites.size()) != n)
    throw ValidationError("site count does not match the index");
  const std::size_t kk = static_cast<std::size_t>(std::max(k, 1));
  d_nb_.assign(static_cast<std::size_t>(n) * kk, 0.0);
  d_nn_.assign(static_cast<std::size_t>(n) * kk * kk, 0.0);
  deps_.resize(n);
  for (int pos = 0; pos < n; ++pos) {
    const int m = index_.n_nbr[pos];
    const Location sp = sites[index_.order[pos]];
    for (int a = 0; a < m; ++a) {
      const int na = index_.nbr[pos * k + a];
      const Location sa = sites[index_.order[na]];
      d_nb_[pos * kk + a] = distance(sp, sa);
      deps_[na].emplace_back(pos, a);
      for (int b = 0; b < m; ++b) {
        const Location sb = sites[index_.order[index_.nbr[pos * k + b]]];
        d_nn_[pos * kk * kk + a * kk + b] = distance(sa, sb);
      }
    }
  }
}

NngpFactor NngpWorkspace::factor(const ExpCovParams& params, double nugget) const {
  params.validate();
  if (nugget < 0.0) throw ValidationError("nugget must be nonnegative");
  const int n = index_.n();
  const int k = std::max(index_.k, 1);
  NngpFactor f;
  f.coef.assign(static_cast<std::size_t>(n) * k, 0.0);
  f.cond_var.assign(n, params.sigma2 + nugget);
  if (n == 0) return f;

  // covariance values for every cached distance in two kernel sweeps
  std::vector<double> c_nb(d_nb_.size()), c_nn(d_nn_.size());
  const auto& ops = kernels::ops();
  ops.expcov_v(d_nb_.data(), c_nb.data(), d_nb_.size(), params.sigma2, params.phi);
  ops.expcov_v(d_nn_.data(), c_nn.data(), d_nn_.size(), params.sigma2, params.phi);

  const auto ladder = jitter_ladder(params.sigma2);
  Eigen::MatrixXd M(k, k);
  Eigen::VectorXd c(k), b(k);
  for (int pos = 0; pos < n; ++pos) {
    const int m = index_.n_nbr[pos];
    if (m == 0) continue;
    for (int a = 0; a < m; ++a) {
      c(a) = c_nb[pos * k + a];
      for (int bcol = 0; bcol < m; ++bcol) M(a, bcol) = c_nn[pos * k * k + a * k + bcol];
      M(a, a) += nugget;
    }
    bool ok = false;
    for (double jit : ladder) {
      Eigen::MatrixXd Mj = M.topLeftCorner(m, m);
      Mj.diagonal().array() += jit;
      Eigen::LLT<Eigen::MatrixXd> llt(Mj);
      if (llt.info() != Eigen::Success) continue;
      b.head(m) = llt.solve(c.head(m));
      const double fv = params.sigma2 + nugget - c.head(m).dot(b.head(m));
      if (!(fv > 0.0)) continue;
      for (int t = 0; t < m; ++t) f.coef[pos * k + t] = b(t);
      f.cond_var[pos] = fv;
      ok = true;
      break;
    }
    if (!ok) {
      std::ostringstream msg;
      msg << "conditional variance not positive after jitter ladder at ordered position " << pos
          << " (m=" << m << ", sigma2=" << params.sigma2 << ", phi=" << params.phi << ")";
      throw NumericalError(msg.str());
    }
  }
  return f;
}

double nngp_logpdf(std::span<const double> values, std::span<const double> mean,
                   const NngpIndex& index, const NngpFactor& factor) {
  const int n = index.n();
  const int k = std::max(index.k, 1);
  if (static_cast<int>(values.size()) != n)
    throw ValidationError("field length does not match the index");
  const bool has_mean = !mean.empty();
  double ll = 0.0;
  for (int pos = 0; pos < n; ++pos) {
    const int site = index.order[pos];
    double m = has_mean ? mean[site] : 0.0;
    double cond_mean = m;
    for (int t = 0; t < index.n_nbr[pos]; ++t) {
      const int npos = index.nbr[pos * k + t];
      const int nsite = index.order[npos];
      const double nmean = has_mean ? mean[nsite] : 0.0;
      cond_mean += factor.coef[pos * k + t] * (values[nsite] - nmean);
    }
    ll += log_normal_pdf(values[site], cond_mean, factor.cond_var[pos]);
  }
  return ll;
}

double nngp_logpdf(const GpField& field, const NngpIndex& index, const ExpCovParams& params,
                   std::span<const double> mean, double nugget) {
  NngpWorkspace ws(field.sites, index);
  return nngp_logpdf(field.values, mean, index, ws.factor(params, nugget));
}

std::vector<double> nngp_prior_draw(const NngpIndex& index, const NngpFactor& factor, Rng& rng) {
  const int n = index.n();
  const int k = std::max(index.k, 1);
  std::vector<double> out(n, 0.0);
  for (int pos = 0; pos < n; ++pos) {
    double cond_mean = 0.0;
    for (int t = 0; t < index.n_nbr[pos]; ++t)
      cond_mean += factor.coef[pos * k + t] * out[index.order[index.nbr[pos * k + t]]];
    out[index.order[pos]] = cond_mean + std::sqrt(factor.cond_var[pos]) * rng.normal();
  }
  return out;
}

namespace {

Eigen::MatrixXd dense_cov(std::span<const Location> sites, const ExpCovParams& params,
                          double nugget) {
  const int n = static_cast<int>(sites.size());
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i) {
    C(i, i) = params.sigma2 + nugget;
    for (int j = 0; j < i; ++j) {
      const double v = params.sigma2 * std::exp(-params.phi * distance(sites[i], sites[j]));
      C(i, j) = v;
      C(j, i) = v;
    }
  }
  return C;
}

Eigen::LLT<Eigen::MatrixXd> dense_chol(const Eigen::MatrixXd& C, double sigma2,
                                       const char* what) {
  for (double jit : jitter_ladder(sigma2)) {
    Eigen::MatrixXd Cj = C;
    Cj.diagonal().array() += jit;
    Eigen::LLT<Eigen::MatrixXd> llt(Cj);
    if (llt.info() == Eigen::Success) return llt;
  }
  std::ostringstream msg;
  msg << what << ": covariance factorization failed after jitter ladder (n=" << C.rows() << ")";
  if (C.rows() <= 512) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    msg << "; eigenvalue range [" << lo << ", " << hi << "], condition estimate "
        << (lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
  }
  throw NumericalError(msg.str());
}

}  // namespace

double full_gp_logpdf(const GpField& field, const ExpCovParams& params,
                      std::span<const double> mean, double nugget) {
  params.validate();
  const int n = static_cast<int>(field.sites.size());
  if (static_cast<int>(field.values.size()) != n)
    throw ValidationError("field values/sites length mismatch");
  if (n == 0) return 0.0;
  if (nugget == 0.0) check_no_duplicates(field.sites, "full_gp_logpdf");

  const Eigen::MatrixXd C = dense_cov(field.sites, params, nugget);
  auto llt = dense_chol(C, params.sigma2, "full_gp_logpdf");

  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) r(i) = field.values[i] - (mean.empty() ? 0.0 : mean[i]);
  const Eigen::VectorXd alpha = llt.solve(r);
  const Eigen::MatrixXd& L = llt.matrixLLT();
  double log_det = 0.0;
  for (int i = 0; i < n; ++i) log_det += 2.0 * std::log(L(i, i));
  return -0.5 * (n * kLog2Pi + log_det + r.dot(alpha));
}

std::vector<double> dense_gp_draw(std::span<const Location> sites, const ExpCovParams& params,
                                  double nugget, Rng& rng) {
  params.validate();
  const int n = static_cast<int>(sites.size());
  if (n == 0) return {};
  const Eigen::MatrixXd C = dense_cov(sites, params, nugget);
  auto llt = dense_chol(C, params.sigma2, "dense_gp_draw");
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = rng.normal();
  const Eigen::VectorXd v = llt.matrixL() * z;
  return std::vector<double>(v.data(), v.data() + n);
}

KrigingPlan::KrigingPlan(std::span<const Location> cond_sites,
                         std::span<const Location> new_sites, int k) {
  if (cond_sites.empty()) throw ValidationError("kriging requires conditioning sites");
  k_ = std::min<int>(k, static_cast<int>(cond_sites.size()));
  if (k_ < 1) throw ValidationError("kriging neighbor count must be positive");
  const int nn = static_cast<int>(new_sites.size());
  const int nc = static_cast<int>(cond_sites.size());
  n_nbr_.assign(nn, k_);
  nbr_.assign(static_cast<std::size_t>(nn) * k_, 0);
  d_nb_.assign(static_cast<std::size_t>(nn) * k_, 0.0);
  d_nn_.assign(static_cast<std::size_t>(nn) * k_ * k_, 0.0);

  std::vector<double> xs(nc), ys(nc), d2(nc);
  for (int j = 0; j < nc; ++j) {
    xs[j] = cond_sites[j].x;
    ys[j] = cond_sites[j].y;
  }
  const auto& ops = kernels::ops();
  std::vector<int> cand(nc);
  for (int i = 0; i < nn; ++i) {
    ops.dist2_v(new_sites[i].x, new_sites[i].y, xs.data(), ys.data(), d2.data(), nc);
    std::iota(cand.begin(), cand.end(), 0);
    std::partial_sort(cand.begin(), cand.begin() + k_, cand.end(), [&](int a, int b) {
      if (d2[a] != d2[b]) return d2[a] < d2[b];
      return a < b;
    });
    for (int t = 0; t < k_; ++t) {
      const int ct = cand[t];
      nbr_[i * k_ + t] = ct;
      d_nb_[i * k_ + t] = std::sqrt(d2[ct]);
      for (int u = 0; u < k_; ++u)
        d_nn_[static_cast<std::size_t>(i) * k_ * k_ + t * k_ + u] =
            distance(cond_sites[ct], cond_sites[cand[u]]);
    }
  }
}

void KrigingPlan::moments(const ExpCovParams& params, double nugget,
                          std::span<const double> cond_values, double process_mean,
                          std::span<double> out_mean, std::span<double> out_var) const {
  params.validate();
  const int nn = n_new();
  std::vector<double> c_nb(d_nb_.size()), c_nn(d_nn_.size());
  const auto& ops = kernels::ops();
  ops.expcov_v(d_nb_.data(), c_nb.data(), d_nb_.size(), params.sigma2, params.phi);
  ops.expcov_v(d_nn_.data(), c_nn.data(), d_nn_.size(), params.sigma2, params.phi);

  const auto ladder = jitter_ladder(params.sigma2);
  Eigen::MatrixXd M(k_, k_);
  Eigen::VectorXd c(k_), b(k_), r(k_);
  for (int i = 0; i < nn; ++i) {
    for (int a = 0; a < k_; ++a) {
      c(a) = c_nb[i * k_ + a];
      r(a) = cond_values[nbr_[i * k_ + a]] - process_mean;
      for (int u = 0; u < k_; ++u)
        M(a, u) = c_nn[static_cast<std::size_t>(i) * k_ * k_ + a * k_ + u];
      M(a, a) += nugget;
    }
    bool ok = false;
    for (double jit : ladder) {
      Eigen::MatrixXd Mj = M;
      Mj.diagonal().array() += jit;
      Eigen::LLT<Eigen::MatrixXd> llt(Mj);
      if (llt.info() != Eigen::Success) continue;
      b = llt.solve(c);
      const double var = params.sigma2 + nugget - c.dot(b);
      if (!(var >= 0.0)) continue;
      out_mean[i] = process_mean + b.dot(r);
      out_var[i] = var;
      ok = true;
      break;
    }
    if (!ok) throw NumericalError("kriging solve failed after jitter ladder");
  }
}

std::vector<double> nngp_conditional_draw(std::span<const Location> cond_sites,
                                          std::span<const double> cond_values,
                                          const ExpCovParams& params, double nugget,
                                          std::span<const Location> new_sites, int k,
                                          double process_mean, Rng& rng) {
  KrigingPlan plan(cond_sites, new_sites, k);
  std::vector<double> mean(new_sites.size()), var(new_sites.size());
  plan.moments(params, nugget, cond_values, process_mean, mean, var);
  std::vector<double> out(new_sites.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = mean[i] + std::sqrt(std::max(var[i], 0.0)) * rng.normal();
  return out;
}

}  // namespace prefsdm
