#include "oxyspec/unmixing.hpp"

#include "oxyspec/csv.hpp"
#include "oxyspec/error.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

namespace oxyspec {

namespace {

constexpr double kDegenerateConcentration = 1e-12;

Eigen::VectorXd solve_subset(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                             const std::vector<int>& cols)
{
    Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k)
        sub.col(static_cast<Eigen::Index>(k)) = a.col(cols[k]);
    return sub.householderQr().solve(b);
}

template <typename F>
UnmixResult unmix_impl(std::span<const F> spectrum, const EndmemberMatrix& em,
                       const Eigen::MatrixXd& correction)
{
    const auto n = static_cast<Eigen::Index>(spectrum.size());
    if (n != em.columns.rows())
        throw ShapeError("unmix: spectrum has " + std::to_string(n) + " bands, endmembers " +
                         std::to_string(em.columns.rows()));
    if (correction.rows() != n || correction.cols() != n)
        throw ShapeError("unmix: correction matrix must be bands x bands");
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i)
        r(i) = static_cast<double>(spectrum[static_cast<std::size_t>(i)]);
    const Eigen::VectorXd corrected = correction * r;
    Eigen::VectorXd absorbance(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(corrected(i) > 0.0) || !std::isfinite(corrected(i)))
            throw DomainError("unmix: non-positive reflectance in band " + std::to_string(i));
        absorbance(i) = -std::log(corrected(i));
    }
    static constexpr bool constrained[EndmemberMatrix::kColumns] = {true, true, false, false};
    UnmixResult out;
    out.concentrations = nnls(em.columns, absorbance, constrained);
    const double hbo2 = out.concentrations(EndmemberMatrix::kHbO2);
    const double hb = out.concentrations(EndmemberMatrix::kHb);
    if (hbo2 + hb <= kDegenerateConcentration) {
        out.so2 = 0.5;
        out.degenerate = true;
    } else {
        out.so2 = std::clamp(hbo2 / (hbo2 + hb), 0.0, 1.0);
    }
    return out;
}

} // namespace

void EndmemberMatrix::validate() const
{
    if (columns.cols() != kColumns)
        throw ConfigError("endmembers: expected 4 columns (hbo2, hb, offset, slope)");
    if (columns.rows() < kColumns)
        throw ConfigError("endmembers: need at least 4 bands for 4 columns");
    if (!columns.allFinite())
        throw ConfigError("endmembers: non-finite entries");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(columns);
    if (qr.rank() < kColumns)
        throw ConfigError("endmembers: matrix is rank deficient");
}

EndmemberMatrix make_endmembers(const CameraModel& camera, const ExtinctionTable& table)
{
    camera.validate();
    const auto bands = static_cast<Eigen::Index>(camera.bands());
    const auto weights = trapezoid_weights(camera.wavelengths);
    std::vector<double> hbo2(camera.wavelengths.size()), hb(camera.wavelengths.size());
    for (std::size_t k = 0; k < camera.wavelengths.size(); ++k) {
        const auto c = table.at(camera.wavelengths[k]);
        hbo2[k] = c.hbo2;
        hb[k] = c.hb;
    }
    EndmemberMatrix em;
    em.columns.resize(bands, EndmemberMatrix::kColumns);
    for (Eigen::Index b = 0; b < bands; ++b) {
        double num_o = 0.0, num_d = 0.0, den = 0.0;
        for (std::size_t k = 0; k < camera.wavelengths.size(); ++k) {
            const double kernel = camera.light[k] * camera.transmission[k] *
                                  camera.response(b, static_cast<Eigen::Index>(k)) * weights[k];
            num_o += kernel * hbo2[k];
            num_d += kernel * hb[k];
            den += kernel;
        }
        em.columns(b, EndmemberMatrix::kHbO2) = num_o / den;
        em.columns(b, EndmemberMatrix::kHb) = num_d / den;
        em.columns(b, EndmemberMatrix::kOffset) = 1.0;
        em.columns(b, EndmemberMatrix::kSlope) =
            bands > 1 ? static_cast<double>(b) / static_cast<double>(bands - 1) - 0.5 : 0.0;
    }
    const double scale = em.columns.leftCols(2).maxCoeff();
    em.columns.leftCols(2) /= scale;
    em.validate();
    return em;
}

Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                     std::span<const bool> constrained, double tolerance)
{
    const auto n = static_cast<int>(a.cols());
    if (a.rows() != b.size() || constrained.size() != static_cast<std::size_t>(n))
        throw ShapeError("nnls: dimension mismatch");
    std::vector<bool> passive(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        passive[j] = !constrained[j];

    auto passive_cols = [&] {
        std::vector<int> cols;
        for (int j = 0; j < n; ++j)
            if (passive[j])
                cols.push_back(j);
        return cols;
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (auto cols = passive_cols(); !cols.empty()) {
        const auto z = solve_subset(a, b, cols);
        for (std::size_t k = 0; k < cols.size(); ++k)
            x(cols[k]) = z(static_cast<Eigen::Index>(k));
    }
    const double tol = tolerance * std::max(1.0, (a.transpose() * b).cwiseAbs().maxCoeff());

    for (int outer = 0; outer < 3 * n + 3; ++outer) {
        const Eigen::VectorXd w = a.transpose() * (b - a * x);
        int best = -1;
        for (int j = 0; j < n; ++j)
            if (!passive[j] && w(j) > tol && (best < 0 || w(j) > w(best)))
                best = j;
        if (best < 0)
            return x;
        passive[best] = true;

        for (int inner = 0; inner < 3 * n + 3; ++inner) {
            const auto cols = passive_cols();
            const auto z = solve_subset(a, b, cols);
            double alpha = 1.0;
            bool feasible = true;
            for (std::size_t k = 0; k < cols.size(); ++k) {
                const int j = cols[k];
                const double zj = z(static_cast<Eigen::Index>(k));
                if (constrained[j] && zj <= 0.0) {
                    feasible = false;
                    const double denom = x(j) - zj;
                    if (denom > 0.0)
                        alpha = std::min(alpha, x(j) / denom);
                }
            }
            if (feasible) {
                x.setZero();
                for (std::size_t k = 0; k < cols.size(); ++k)
                    x(cols[k]) = z(static_cast<Eigen::Index>(k));
                break;
            }
            Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
            for (std::size_t k = 0; k < cols.size(); ++k)
                full(cols[k]) = z(static_cast<Eigen::Index>(k));
            x += alpha * (full - x);
            for (int j = 0; j < n; ++j)
                if (constrained[j] && passive[j] && x(j) <= tol) {
                    passive[j] = false;
                    x(j) = 0.0;
                }
        }
    }
    return x;
}

UnmixResult unmix_so2(std::span<const double> spectrum, const EndmemberMatrix& em,
                      const Eigen::MatrixXd& correction)
{
    return unmix_impl(spectrum, em, correction);
}

UnmixResult unmix_so2(std::span<const float> spectrum, const EndmemberMatrix& em,
                      const Eigen::MatrixXd& correction)
{
    return unmix_impl(spectrum, em, correction);
}

OxygenationMap unmix_map(const Hypercube& cube, const EndmemberMatrix& em,
                         const Eigen::MatrixXd& correction)
{
    cube.validate();
    if (static_cast<std::size_t>(cube.bands) != em.bands())
        throw ShapeError("unmix_map: cube has " + std::to_string(cube.bands) +
                         " bands, endmembers " + std::to_string(em.bands()));
    OxygenationMap out{Image(cube.height, cube.width), std::vector<std::uint8_t>(cube.pixels(), 0)};
    for (std::size_t p = 0; p < cube.pixels(); ++p) {
        const std::span<const float> px(cube.data.data() + p * cube.bands,
                                        static_cast<std::size_t>(cube.bands));
        try {
            const auto r = unmix_so2(px, em, correction);
            out.values.data[p] = static_cast<float>(r.so2);
            out.degenerate[p] = r.degenerate;
        } catch (const DomainError&) {
            out.values.data[p] = 0.0f;
            out.degenerate[p] = 1;
        }
    }
    return out;
}

void save_endmembers_csv(const EndmemberMatrix& em, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    out << "band,hbo2,hb,offset,slope\n";
    out.precision(17);
    for (Eigen::Index b = 0; b < em.columns.rows(); ++b) {
        out << b;
        for (int c = 0; c < EndmemberMatrix::kColumns; ++c)
            out << ',' << em.columns(b, c);
        out << '\n';
    }
    if (!out)
        throw DataError("write failed for '" + path.string() + "'");
}

EndmemberMatrix load_endmembers_csv(const std::filesystem::path& path)
{
    const auto table = csv::read_file(path);
    const std::size_t cols[] = {table.column("hbo2"), table.column("hb"), table.column("offset"),
                                table.column("slope")};
    EndmemberMatrix em;
    em.columns.resize(static_cast<Eigen::Index>(table.rows.size()), EndmemberMatrix::kColumns);
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        for (int c = 0; c < EndmemberMatrix::kColumns; ++c)
            em.columns(static_cast<Eigen::Index>(r), c) = csv::to_double(table.rows[r][cols[c]]);
    em.validate();
    return em;
}

} // namespace oxyspec
