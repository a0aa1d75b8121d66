#include "molerase/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "molerase/rng.hpp"

namespace molerase {

double FitResult::value(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[i];
  }
  throw std::out_of_range("no fit parameter named " + name);
}

double FitResult::sigma(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return sigmas[i];
  }
  throw std::out_of_range("no fit parameter named " + name);
}

namespace {

// Levenberg-Marquardt on residuals r_i(p) = model(t_i, p) - y_i with an
// analytic Jacobian callback.
template <typename Model, typename Jacobian>
bool levenberg_marquardt(const std::vector<XY>& pts, Eigen::VectorXd& p,
                         Model model, Jacobian jac, int max_iter = 300) {
  const int n = static_cast<int>(pts.size());
  const int m = static_cast<int>(p.size());
  double lambda = 1e-3;
  auto ssr = [&](const Eigen::VectorXd& q) {
    double s = 0.0;
    for (const XY& pt : pts) {
      double r = model(pt.x, q) - pt.y;
      s += r * r;
    }
    return s;
  };
  double cur = ssr(p);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd J(n, m);
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) {
      r(i) = model(pts[i].x, p) - pts[i].y;
      J.row(i) = jac(pts[i].x, p);
    }
    Eigen::MatrixXd JtJ = J.transpose() * J;
    Eigen::VectorXd g = J.transpose() * r;
    bool stepped = false;
    for (int attempt = 0; attempt < 24; ++attempt) {
      Eigen::MatrixXd A = JtJ;
      for (int k = 0; k < m; ++k) A(k, k) += lambda * (JtJ(k, k) + 1e-12);
      Eigen::VectorXd trial = p - A.ldlt().solve(g);
      double t = ssr(trial);
      if (t <= cur) {
        double drop = cur - t;
        p = trial;
        cur = t;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (drop < 1e-14 * (1.0 + cur)) return true;
        break;
      }
      lambda *= 8.0;
    }
    if (!stepped) return true;  // stuck at a (local) minimum
  }
  return true;
}

template <typename Model, typename Jacobian>
void fill_uncertainties(const std::vector<XY>& pts, const Eigen::VectorXd& p,
                        Model model, Jacobian jac, FitResult& out) {
  const int n = static_cast<int>(pts.size());
  const int m = static_cast<int>(p.size());
  Eigen::MatrixXd J(n, m);
  double ssr = 0.0;
  for (int i = 0; i < n; ++i) {
    double r = model(pts[i].x, p) - pts[i].y;
    ssr += r * r;
    J.row(i) = jac(pts[i].x, p);
  }
  out.residual_norm = std::sqrt(ssr);
  out.n_points = n;
  double dof = std::max(1, n - m);
  double s2 = ssr / dof;
  Eigen::MatrixXd cov =
      (J.transpose() * J + 1e-300 * Eigen::MatrixXd::Identity(m, m))
          .ldlt()
          .solve(Eigen::MatrixXd::Identity(m, m)) *
      s2;
  out.sigmas.resize(m);
  for (int k = 0; k < m; ++k) {
    out.sigmas[k] = cov(k, k) > 0 ? std::sqrt(cov(k, k)) : 0.0;
  }
}

}  // namespace

FitResult fit_exponential(const std::vector<XY>& points, bool with_offset) {
  if (points.size() < 3) {
    throw FitError("exponential fit needs at least 3 points");
  }
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (points[i].x == points[j].x) {
        throw FitError("duplicate abscissae in exponential fit");
      }
    }
  }

  double ymin = points[0].y;
  double ymax = points[0].y;
  for (const XY& p : points) {
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  double c0 = with_offset ? std::max(0.0, ymin - 0.05 * (ymax - ymin)) : 0.0;

  // Log-domain initialization on the positive part.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n_log = 0;
  for (const XY& p : points) {
    double v = p.y - c0;
    if (v > 1e-300) {
      double ly = std::log(v);
      sx += p.x;
      sy += ly;
      sxx += p.x * p.x;
      sxy += p.x * ly;
      ++n_log;
    }
  }
  if (n_log < 2) throw FitError("too few positive points for a decay fit");
  double denom = n_log * sxx - sx * sx;
  double slope = denom != 0.0 ? (n_log * sxy - sx * sy) / denom : 0.0;
  double inter = (sy - slope * sx) / n_log;

  Eigen::VectorXd p(with_offset ? 3 : 2);
  p(0) = std::exp(inter);  // A
  p(1) = -slope;           // gamma
  if (with_offset) p(2) = c0;

  auto model = [with_offset](double t, const Eigen::VectorXd& q) {
    double v = q(0) * std::exp(-q(1) * t);
    return with_offset ? v + q(2) : v;
  };
  auto jac = [with_offset](double t, const Eigen::VectorXd& q) {
    Eigen::RowVectorXd row(with_offset ? 3 : 2);
    double e = std::exp(-q(1) * t);
    row(0) = e;
    row(1) = -q(0) * t * e;
    if (with_offset) row(2) = 1.0;
    return row;
  };

  FitResult out;
  out.converged = levenberg_marquardt(points, p, model, jac);
  if (!std::isfinite(p(0)) || !std::isfinite(p(1))) {
    throw FitError("exponential fit diverged; residual norm " +
                   std::to_string(out.residual_norm));
  }
  out.names = {"amplitude", "gamma"};
  out.values = {p(0), p(1)};
  if (with_offset) {
    out.names.push_back("offset");
    out.values.push_back(p(2));
  }
  fill_uncertainties(points, p, model, jac, out);
  return out;
}

FitResult fit_fringe(const std::vector<XY>& points) {
  if (points.size() < 5) throw FitError("fringe fit needs at least 5 points");
  double lo = points[0].x;
  double hi = points[0].x;
  for (const XY& p : points) {
    lo = std::min(lo, p.x);
    hi = std::max(hi, p.x);
  }
  if (hi - lo < 3.0) {
    throw FitError("degenerate phase coverage: span " + std::to_string(hi - lo) +
                   " rad");
  }

  const int n = static_cast<int>(points.size());
  auto solve = [&](const std::vector<double>& ys) {
    Eigen::MatrixXd M(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      M(i, 0) = 1.0;
      M(i, 1) = std::cos(points[i].x);
      M(i, 2) = std::sin(points[i].x);
      y(i) = ys[i];
    }
    Eigen::Vector3d beta =
        (M.transpose() * M).ldlt().solve(M.transpose() * y);
    return beta;
  };

  std::vector<double> ys(n);
  for (int i = 0; i < n; ++i) ys[i] = points[i].y;
  Eigen::Vector3d beta = solve(ys);
  double offset = beta(0);
  double a = beta(1);
  double b = beta(2);
  double amplitude = 2.0 * std::hypot(a, b);
  double phi0 = std::atan2(b, a);

  // Residual bootstrap for the uncertainties.
  std::vector<double> fitted(n), resid(n);
  for (int i = 0; i < n; ++i) {
    fitted[i] = offset + a * std::cos(points[i].x) + b * std::sin(points[i].x);
    resid[i] = points[i].y - fitted[i];
  }
  constexpr int kResamples = 200;
  RngStream rng(0x0f17'f217'9e5aULL);
  double sum_c = 0, sum_c2 = 0, sum_amp = 0, sum_amp2 = 0, sum_p = 0,
         sum_p2 = 0;
  std::vector<double> boot(n);
  for (int rsm = 0; rsm < kResamples; ++rsm) {
    for (int i = 0; i < n; ++i) {
      boot[i] = fitted[i] + resid[rng.uniform_int(n)];
    }
    Eigen::Vector3d bb = solve(boot);
    double amp = 2.0 * std::hypot(bb(1), bb(2));
    double ph = std::atan2(bb(2), bb(1));
    sum_c += bb(0);
    sum_c2 += bb(0) * bb(0);
    sum_amp += amp;
    sum_amp2 += amp * amp;
    double dp = std::remainder(ph - phi0, 2 * 3.14159265358979324);
    sum_p += dp;
    sum_p2 += dp * dp;
  }
  auto sd = [&](double s, double s2) {
    double v = s2 / kResamples - (s / kResamples) * (s / kResamples);
    return v > 0 ? std::sqrt(v) : 0.0;
  };

  FitResult out;
  out.names = {"offset", "amplitude", "phi0"};
  out.values = {offset, amplitude, phi0};
  out.sigmas = {sd(sum_c, sum_c2), sd(sum_amp, sum_amp2), sd(sum_p, sum_p2)};
  double ssr = 0;
  for (double r : resid) ssr += r * r;
  out.residual_norm = std::sqrt(ssr);
  out.n_points = n;
  out.converged = true;
  return out;
}

namespace {

int flag_bit_at(const TrialRecord& r, int ordinal) {
  if (ordinal < 0 || ordinal >= static_cast<int>(r.flags.size())) {
    throw std::out_of_range("flag index " + std::to_string(ordinal) +
                            " out of range");
  }
  return r.flags[ordinal].second;
}

}  // namespace

ExciseResult excise(const std::vector<TrialRecord>& records, int image_index) {
  ExciseResult out;
  std::size_t occupied = 0;
  for (const TrialRecord& r : records) {
    if (!r.occupied_initial) continue;
    ++occupied;
    if (flag_bit_at(r, image_index) == 0) out.records.push_back(r);
  }
  out.retained_fraction =
      occupied == 0 ? 0.0
                    : static_cast<double>(out.records.size()) / occupied;
  return out;
}

ExciseResult excise_all(const std::vector<TrialRecord>& records) {
  ExciseResult out;
  std::size_t occupied = 0;
  for (const TrialRecord& r : records) {
    if (!r.occupied_initial) continue;
    ++occupied;
    bool flagged = false;
    for (const auto& [step, bit] : r.flags) flagged = flagged || bit != 0;
    if (!flagged) out.records.push_back(r);
  }
  out.retained_fraction =
      occupied == 0 ? 0.0
                    : static_cast<double>(out.records.size()) / occupied;
  return out;
}

double conditional_purity(double s, double eps01, double eps10) {
  if (s < 0 || s > 1 || eps01 < 0 || eps01 > 1 || eps10 < 0 || eps10 > 1) {
    throw std::invalid_argument("conditional_purity inputs must be in [0,1]");
  }
  double num = s * (1.0 - eps01);
  double den = num + (1.0 - s) * eps10;
  if (den == 0.0) {
    throw UndefinedConditionalError(
        "conditioning event has zero probability");
  }
  return num / den;
}

ContributionTable rate_decompose(
    const std::map<std::string, std::vector<XY>>& batches) {
  for (const char* key : {"tev", "ev", "t", "none"}) {
    if (batches.find(key) == batches.end()) {
      throw IncompleteDesignError(std::string("missing batch '") + key + "'");
    }
  }
  auto rate_of = [&](const std::string& key) {
    FitResult f = fit_exponential(batches.at(key), false);
    return RateContribution{f.value("gamma"), f.sigma("gamma")};
  };
  RateContribution tev = rate_of("tev");
  RateContribution ev = rate_of("ev");
  RateContribution t = rate_of("t");
  RateContribution none = rate_of("none");

  auto diff = [](const RateContribution& a, const RateContribution& b) {
    return RateContribution{a.rate - b.rate,
                            std::hypot(a.sigma, b.sigma)};
  };
  ContributionTable table;
  table.total = tev;
  table.detect_light = diff(tev, t);
  table.ramps = diff(t, none);
  table.background = none;
  table.additivity_residual = tev.rate - t.rate - ev.rate + none.rate;
  table.additivity_sigma = std::sqrt(tev.sigma * tev.sigma +
                                     t.sigma * t.sigma + ev.sigma * ev.sigma +
                                     none.sigma * none.sigma);
  table.additive_within_2sigma =
      std::abs(table.additivity_residual) <= 2.0 * table.additivity_sigma;
  return table;
}

double one_over_e_time(const std::vector<XY>& curve) {
  if (curve.size() < 2) throw FitError("1/e crossing needs >= 2 points");
  std::vector<XY> pts = curve;
  std::sort(pts.begin(), pts.end(),
            [](const XY& a, const XY& b) { return a.x < b.x; });
  double y0 = pts.front().y;
  if (y0 <= 0) throw FitError("curve does not start positive");
  double target = y0 * std::exp(-1.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].y <= target) {
      double ya = std::max(pts[i - 1].y, 1e-12);
      double yb = std::max(pts[i].y, 1e-12);
      double la = std::log(ya), lb = std::log(yb), lt = std::log(target);
      double w = la == lb ? 0.5 : (la - lt) / (la - lb);
      return pts[i - 1].x + w * (pts[i].x - pts[i - 1].x);
    }
  }
  // No crossing inside the sweep: extrapolate the tail slope.
  const XY& a = pts[pts.size() - 2];
  const XY& b = pts.back();
  double la = std::log(std::max(a.y, 1e-12));
  double lb = std::log(std::max(b.y, 1e-12));
  if (la <= lb) throw FitError("decay curve never reaches 1/e");
  double slope = (lb - la) / (b.x - a.x);
  return b.x + (std::log(y0 * std::exp(-1.0)) - lb) / slope;
}

double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("KS test needs nonempty samples");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    double fa = static_cast<double>(i) / a.size();
    double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  double n_eff = static_cast<double>(a.size()) * b.size() /
                 static_cast<double>(a.size() + b.size());
  double lambda = (std::sqrt(n_eff) + 0.12 + 0.11 / std::sqrt(n_eff)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = 2.0 * std::pow(-1.0, k - 1) *
                  std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace molerase
