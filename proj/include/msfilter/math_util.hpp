#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "msfilter/rng.hpp"

namespace msfilter {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Vec gaussian_vector(int dim, RngStream& rng) {
    Vec z(dim);
    for (int i = 0; i < dim; ++i) z(i) = rng.normal();
    return z;
}

// Symmetric PSD square root; negative eigenvalues (Monte Carlo noise)
// are clamped to zero before the root.
inline Mat psd_sqrt(const Mat& m) {
    const Mat sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    Vec ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Number of Euler steps covering a horizon with the given step size,
// robust to 1/h landing a hair above an integer.
inline std::int64_t step_count(double horizon, double h) {
    const double ratio = horizon / h;
    const auto n = static_cast<std::int64_t>(std::ceil(ratio - 1e-9));
    return n < 1 ? 1 : n;
}

inline double gaussian_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * 2.5066282746310005024157652848110);
}

}  // namespace msfilter
