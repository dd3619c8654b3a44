#include "errcal/linmodel.hpp"

#include <cmath>
#include <numbers>

#include "errcal/error.hpp"

namespace errcal {

namespace {

struct QrSolution {
    Eigen::VectorXd coef;
    Eigen::MatrixXd xtx_inv;
    double rss = 0.0;
};

constexpr double kRankTolerance = 1e-10;

QrSolution qr_solve(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                    const std::vector<std::string>& names) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    if (y.size() != n) throw DataError("ols: response and design row counts differ");
    if (p == 0) throw DataError("ols: empty design");
    if (n <= p)
        throw DataError("ols: insufficient data (" + std::to_string(n) + " rows for " +
                        std::to_string(p) + " coefficients)");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(kRankTolerance);
    if (qr.rank() < p) {
        std::string dep;
        for (Eigen::Index i = qr.rank(); i < p; ++i) {
            const Eigen::Index col = qr.colsPermutation().indices()(i);
            if (!dep.empty()) dep += ", ";
            dep += col < static_cast<Eigen::Index>(names.size()) ? names[col]
                                                                 : "column " + std::to_string(col);
        }
        throw NumericalError("ols: singular design; linearly dependent column(s): " + dep);
    }

    QrSolution out;
    out.coef = qr.solve(y);
    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd unpermuted = r_inv * r_inv.transpose();
    const auto& perm = qr.colsPermutation();
    out.xtx_inv = perm * unpermuted * perm.transpose();
    out.xtx_inv = 0.5 * (out.xtx_inv + out.xtx_inv.transpose()).eval();
    out.rss = (y - design * out.coef).squaredNorm();
    return out;
}

} // namespace

LinearFit fit_ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                  std::vector<std::string> names) {
    QrSolution s = qr_solve(y, design, names);
    LinearFit fit;
    fit.n = design.rows();
    fit.dof = design.rows() - design.cols();
    fit.sigma2 = s.rss / static_cast<double>(fit.dof);
    fit.coef = std::move(s.coef);
    fit.vcov = fit.sigma2 * s.xtx_inv;
    fit.term_names = std::move(names);
    return fit;
}

double random_intercepts_loglik(const Eigen::MatrixXd& values, const Eigen::MatrixXd& fixed_design,
                                const Eigen::VectorXd& fixed, double var_between, double var_within) {
    const double n = static_cast<double>(values.rows());
    const double m = static_cast<double>(values.cols());
    const Eigen::VectorXd means = values.rowwise().mean();
    const double within = (values.colwise() - means).squaredNorm();
    const double between = (means - fixed_design * fixed).squaredNorm();
    // Per subject, the covariance has eigenvalue var_within (m-1 times) and
    // var_within + m * var_between (once, along the mean direction).
    const double gamma = var_between + var_within / m;
    return -0.5 * n * m * std::log(2.0 * std::numbers::pi) -
           0.5 * n * (m - 1.0) * std::log(var_within) - 0.5 * n * std::log(m * gamma) -
           0.5 * within / var_within - 0.5 * between / gamma;
}

MixedFit fit_random_intercepts(const Eigen::MatrixXd& values, const Eigen::MatrixXd& fixed_design) {
    const Eigen::Index n = values.rows();
    const Eigen::Index m = values.cols();
    if (m < 2) throw DesignError("random intercepts: need at least 2 replicates per subject");
    if (fixed_design.rows() != n) throw DataError("random intercepts: design row count mismatch");

    const Eigen::VectorXd means = values.rowwise().mean();
    const double within = (values.colwise() - means).squaredNorm();
    const double spread = (values.array() - values.mean()).matrix().squaredNorm();
    if (!(within > 1e-24 * spread) || within == 0.0)
        throw NumericalError("random intercepts: within-subject variance is zero "
                             "(replicates identical within every subject)");

    QrSolution s = qr_solve(means, fixed_design, {});
    const double nd = static_cast<double>(n);
    const double md = static_cast<double>(m);

    MixedFit fit;
    fit.n_subjects = n;
    fit.n_replicates = m;
    fit.fixed = s.coef;
    fit.var_within = within / (nd * (md - 1.0));
    double gamma = s.rss / nd;
    fit.var_between = gamma - fit.var_within / md;
    if (fit.var_between < 0.0) {
        // Constrained maximum: with no between variance all n*m values are iid.
        fit.boundary = true;
        fit.var_between = 0.0;
        fit.var_within = (within + md * s.rss) / (nd * md);
        gamma = fit.var_within / md;
    }
    fit.fixed_vcov = gamma * s.xtx_inv;
    fit.loglik = random_intercepts_loglik(values, fixed_design, fit.fixed, fit.var_between,
                                          fit.var_within);

    // Chi-square scaling: within SS ~ tau2 chi2_{n(m-1)}, between SS ~ gamma chi2_n.
    fit.var_within_variance = 2.0 * fit.var_within * fit.var_within / (nd * (md - 1.0));
    fit.var_between_variance = 2.0 * gamma * gamma / nd + fit.var_within_variance / (md * md);
    return fit;
}

Eigen::VectorXd MlParameters::reduced() const {
    const Eigen::Index kk = k();
    Eigen::VectorXd z(5 + 2 * kk);
    z(0) = delta0;
    z.segment(1, kk) = delta_z;
    z(1 + kk) = sigma2_y_given_z;
    z(2 + kk) = kappa0;
    z(3 + kk) = kappa_y;
    z.segment(4 + kk, kk) = kappa_z;
    z(4 + 2 * kk) = sigma2_x_given_yz;
    return z;
}

MlParameters MlParameters::from_reduced(const Eigen::VectorXd& zeta, Eigen::Index k, double tau2) {
    if (zeta.size() != 5 + 2 * k) throw DataError("ml parameters: reduced vector has wrong length");
    MlParameters p;
    p.delta0 = zeta(0);
    p.delta_z = zeta.segment(1, k);
    p.sigma2_y_given_z = zeta(1 + k);
    p.kappa0 = zeta(2 + k);
    p.kappa_y = zeta(3 + k);
    p.kappa_z = zeta.segment(4 + k, k);
    p.sigma2_x_given_yz = zeta(4 + 2 * k);
    p.tau2 = tau2;
    return p;
}

Eigen::VectorXd MlParameters::outcome_coefficients() const {
    const double denom = sigma2_x_given_yz + kappa_y * kappa_y * sigma2_y_given_z;
    if (!(denom > 0.0))
        throw NumericalError("ml: var(X|Y,Z) + kappa_Y^2 var(Y|Z) is zero; beta_X is undefined");
    const double beta_x = kappa_y * sigma2_y_given_z / denom;
    Eigen::VectorXd beta(2 + k());
    beta(0) = beta_x;
    beta(1) = delta0 - beta_x * rho0();
    beta.tail(k()) = delta_z - beta_x * rho_z();
    return beta;
}

} // namespace errcal
