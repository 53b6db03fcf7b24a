#include "kgmlsm/filter.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "kgmlsm/csv.hpp"

namespace kgmlsm::filter {

LeastSquares solve_least_squares(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
    if (x.empty() || x.size() != y.size()) throw std::invalid_argument("least squares: need equal, nonempty row counts");
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto p = static_cast<Eigen::Index>(x.front().size());
    const auto k = static_cast<Eigen::Index>(y.front().size());
    Eigen::MatrixXd X(n, p), Y(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(x[i].size()) != p || static_cast<Eigen::Index>(y[i].size()) != k)
            throw std::invalid_argument("least squares: ragged rows");
        for (Eigen::Index j = 0; j < p; ++j) X(i, j) = x[i][j];
        for (Eigen::Index j = 0; j < k; ++j) Y(i, j) = y[i][j];
    }
    Eigen::MatrixXd gram = X.transpose() * X;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    LeastSquares out;
    out.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (out.condition_number > 1e10) {
        gram += 1e-8 * Eigen::MatrixXd::Identity(p, p);
        out.ridge_applied = true;
    }
    const Eigen::MatrixXd beta = gram.ldlt().solve(X.transpose() * Y);
    if (!beta.allFinite()) throw std::runtime_error("least squares produced non-finite coefficients");
    out.coef.resize(static_cast<std::size_t>(p * k));
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < k; ++j) out.coef[static_cast<std::size_t>(i * k + j)] = beta(i, j);
    return out;
}

Tensor LinearSMModel::predict(const Tensor& weather) const {
    if (weather.rank() != 2 || weather.cols() != kWeatherChannels)
        throw ShapeError("weather must be T x 4, got " + shape_str(weather.shape()));
    Tensor out({weather.rows(), kSmChannels});
    for (std::size_t t = 0; t < weather.rows(); ++t)
        for (std::size_t c = 0; c < kSmChannels; ++c) {
            double v = weights(0, c);
            for (std::size_t f = 0; f < kWeatherChannels; ++f) v += weights(f + 1, c) * weather(t, f);
            out(t, c) = v;
        }
    return out;
}

LinearSMModel fit_sm_regressor(std::span<const Sample> county, bool standardize) {
    if (county.size() < 5) throw std::invalid_argument("fit_sm_regressor needs at least 5 county samples");
    std::vector<std::vector<double>> x, y;
    for (const auto& s : county)
        for (std::size_t t = 0; t < s.weather.rows(); ++t) {
            x.push_back({1.0, s.weather(t, 0), s.weather(t, 1), s.weather(t, 2), s.weather(t, 3)});
            y.push_back({s.sm(t, 0), s.sm(t, 1)});
        }
    const auto ls = solve_least_squares(x, y);

    LinearSMModel m;
    m.weights = Tensor({kWeatherChannels + 1, kSmChannels}, ls.coef);
    m.diagnostics.rows = x.size();
    m.diagnostics.condition_number = ls.condition_number;
    m.diagnostics.ridge_applied = ls.ridge_applied;

    const double n = static_cast<double>(x.size());
    for (std::size_t c = 0; c < kSmChannels; ++c) {
        double sum = 0.0, sq = 0.0, resid = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double pred = 0.0;
            for (std::size_t f = 0; f <= kWeatherChannels; ++f) pred += m.weights(f, c) * x[i][f];
            resid += (pred - y[i][c]) * (pred - y[i][c]);
            sum += y[i][c];
            sq += y[i][c] * y[i][c];
        }
        m.diagnostics.residual_mse[c] = resid / n;
        const double var = sq / n - (sum / n) * (sum / n);
        m.target_scale[c] = standardize && var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return m;
}

double score_sample(const LinearSMModel& model, const Sample& sample) {
    const Tensor pred = model.predict(sample.weather);
    double total = 0.0;
    for (std::size_t t = 0; t < pred.rows(); ++t)
        for (std::size_t c = 0; c < kSmChannels; ++c) {
            const double r = (pred(t, c) - sample.sm(t, c)) / model.target_scale[c];
            total += r * r;
        }
    return total / static_cast<double>(pred.size());
}

ScreenResult screen_by_score(std::span<const Sample> samples, std::span<const double> mse, double threshold) {
    if (samples.size() != mse.size()) throw std::invalid_argument("screen: one score per sample required");
    ScreenResult r;
    r.mse.assign(mse.begin(), mse.end());
    for (std::size_t i = 0; i < samples.size(); ++i) (mse[i] <= threshold ? r.kept : r.discarded).push_back(samples[i]);
    return r;
}

ScreenResult screen_field_samples(std::span<const Sample> samples, const LinearSMModel& model, double threshold,
                                  Exec exec) {
    std::vector<double> mse(samples.size());
    for_each_index(samples.size(), exec, [&](std::size_t i, int) { mse[i] = score_sample(model, samples[i]); });
    return screen_by_score(samples, mse, threshold);
}

void write_filter_report(const std::filesystem::path& path, std::span<const Sample> samples,
                         std::span<const double> mse, double threshold) {
    if (samples.size() != mse.size()) throw std::invalid_argument("filter report: one score per sample required");
    CsvWriter w(path);
    w.row({"id", "year", "mse", "kept"});
    for (std::size_t i = 0; i < samples.size(); ++i)
        w.row({samples[i].id, std::to_string(samples[i].year), format_double(mse[i]),
               mse[i] <= threshold ? "true" : "false"});
}

}  // namespace kgmlsm::filter
