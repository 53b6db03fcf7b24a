#include "kgmlsm/eval.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "kgmlsm/csv.hpp"
#include "kgmlsm/rng.hpp"

namespace kgmlsm::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_pair(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw std::invalid_argument("metric inputs differ in length");
    if (y.empty()) throw std::invalid_argument("metric of an empty sample");
}

std::vector<double> yields(std::span<const Sample> s) {
    std::vector<double> y;
    for (const auto& x : s) y.push_back(x.yield);
    return y;
}

}  // namespace

double rmse(std::span<const double> y, std::span<const double> y_hat) {
    check_pair(y, y_hat);
    double sse = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sse += (y_hat[i] - y[i]) * (y_hat[i] - y[i]);
    return std::sqrt(sse / static_cast<double>(y.size()));
}

double r2(std::span<const double> y, std::span<const double> y_hat) {
    check_pair(y, y_hat);
    if (y.size() < 2) throw std::invalid_argument("r2 needs at least two samples");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sse += (y_hat[i] - y[i]) * (y_hat[i] - y[i]);
        sst += (y[i] - mean) * (y[i] - mean);
    }
    if (sst == 0.0) throw std::invalid_argument("r2 undefined: actuals have zero variance");
    return 1.0 - sse / sst;
}

MetricsReport metrics(std::span<const Sample> samples, std::span<const double> y_hat) {
    const auto y = yields(samples);
    MetricsReport m;
    m.rmse = rmse(y, y_hat);
    m.r2 = r2(y, y_hat);
    m.n = y.size();
    const auto rep = error_report(samples, y_hat);
    m.mean_signed_error = rep.all.mean_signed;
    m.drought_mean_signed_error = rep.drought.mean_signed;
    m.nondrought_mean_signed_error = rep.nondrought.mean_signed;
    for (const auto& r : rep.rows) m.signed_errors.push_back(r.signed_error);
    return m;
}

// ---------------------------------------------------------------------------
// Baselines

const char* to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::lr: return "LR";
        case BaselineKind::ridge: return "Ridge";
        case BaselineKind::mlp: return "MLP";
    }
    return "?";
}

BaselineKind baseline_from_string(const std::string& s) {
    if (s == "LR") return BaselineKind::lr;
    if (s == "Ridge") return BaselineKind::ridge;
    if (s == "MLP") return BaselineKind::mlp;
    throw std::invalid_argument("unknown baseline '" + s + "' (known: LR, Ridge, MLP)");
}

std::vector<double> flatten_features(const Sample& s) {
    std::vector<double> x;
    x.reserve(kTimesteps * (kWeatherChannels + kViChannels + kSmChannels) + kAuxFeatures);
    for (std::size_t c = 0; c < kWeatherChannels; ++c)
        for (std::size_t t = 0; t < kTimesteps; ++t) x.push_back(s.weather(t, c));
    for (double a : s.aux()) x.push_back(a);
    for (std::size_t c = 0; c < kViChannels; ++c)
        for (std::size_t t = 0; t < kTimesteps; ++t) x.push_back(s.vis(t, c));
    for (std::size_t c = 0; c < kSmChannels; ++c)
        for (std::size_t t = 0; t < kTimesteps; ++t) x.push_back(s.sm(t, c));
    return x;
}

double LinearModel::predict(std::span<const double> x) const {
    if (x.size() != coef.size()) throw std::invalid_argument("linear model: feature count mismatch");
    double v = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) v += coef[j] * (x[j] - mean[j]) / scale[j];
    return v;
}

LinearModel fit_linear(const std::vector<std::vector<double>>& x, std::span<const double> y, double alpha) {
    if (x.empty() || x.size() != y.size()) throw std::invalid_argument("fit_linear: need equal, nonempty inputs");
    if (alpha < 0.0) throw std::invalid_argument("fit_linear: alpha must be >= 0");
    const std::size_t n = x.size(), p = x.front().size();
    LinearModel m;
    m.mean.assign(p, 0.0);
    m.scale.assign(p, 1.0);
    for (const auto& row : x) {
        if (row.size() != p) throw std::invalid_argument("fit_linear: ragged feature rows");
        for (std::size_t j = 0; j < p; ++j) m.mean[j] += row[j];
    }
    for (auto& v : m.mean) v /= static_cast<double>(n);
    for (std::size_t j = 0; j < p; ++j) {
        double var = 0.0;
        for (const auto& row : x) var += (row[j] - m.mean[j]) * (row[j] - m.mean[j]);
        var /= static_cast<double>(n);
        m.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd Y(n);
    double ymean = 0.0;
    for (double v : y) ymean += v;
    ymean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) X(i, j) = (x[i][j] - m.mean[j]) / m.scale[j];
        Y(i) = y[i] - ymean;
    }
    Eigen::MatrixXd gram = X.transpose() * X;
    if (alpha == 0.0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > 1e12)
            throw std::runtime_error("least squares system is singular; use a ridge term");
    }
    gram.diagonal().array() += alpha;
    const Eigen::VectorXd beta = gram.ldlt().solve(X.transpose() * Y);
    if (!beta.allFinite()) throw std::runtime_error("linear fit produced non-finite coefficients");
    m.coef.assign(beta.data(), beta.data() + p);
    m.intercept = ymean;
    return m;
}

namespace {

class MlpModel final : public train::SampleModel {
public:
    MlpModel(const ParamStore* params, const LinearModel& standardizer, double y_mean, double y_std)
        : g_(params), standardizer_(&standardizer) {
        const std::size_t p = standardizer.mean.size();
        x_ = g_.input("x", 1, p);
        y_ = g_.input("y", 1, 1);
        const NodeId h = g_.relu(g_.add_row(g_.matmul(x_, g_.param("mlp.hidden.weight")), g_.param("mlp.hidden.bias")));
        const NodeId z = g_.add(g_.matmul(h, g_.param("mlp.out.weight")), g_.param("mlp.out.bias"));
        y_hat_ = g_.add_scalar(g_.scale(z, y_std), y_mean);
        loss_ = g_.square(g_.sub(y_hat_, y_));
    }

    double forward(const Sample& s) override {
        auto x = flatten_features(s);
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - standardizer_->mean[j]) / standardizer_->scale[j];
        g_.set_input(x_, x);
        g_.set_input(y_, std::span<const double>(&s.yield, 1));
        g_.forward();
        return g_.data(loss_)[0];
    }
    void backward(Gradients& grads, double scale) override { g_.backward(loss_, grads, scale); }
    double prediction() const override { return g_.data(y_hat_)[0]; }

private:
    Graph g_;
    const LinearModel* standardizer_;
    NodeId x_{}, y_{}, y_hat_{}, loss_{};
};

}  // namespace

std::vector<double> baseline_fit_predict(BaselineKind kind, std::span<const Sample> train, std::span<const Sample> val,
                                         std::span<const Sample> test, std::uint64_t seed,
                                         const BaselineOptions& opts) {
    if (train.empty()) throw std::invalid_argument("baseline: empty training set");
    std::vector<std::vector<double>> x;
    for (const auto& s : train) x.push_back(flatten_features(s));
    const auto y = yields(train);
    std::vector<double> out;

    if (kind != BaselineKind::mlp) {
        const auto m = fit_linear(x, y, kind == BaselineKind::ridge ? opts.ridge_alpha : 0.0);
        for (const auto& s : test) out.push_back(m.predict(flatten_features(s)));
        return out;
    }

    // Standardization statistics only; the coefficients are unused.
    LinearModel standardizer = fit_linear(x, y, 1.0);
    double y_mean = 0.0, y_var = 0.0;
    for (double v : y) y_mean += v;
    y_mean /= static_cast<double>(y.size());
    for (double v : y) y_var += (v - y_mean) * (v - y_mean);
    const double y_std = y_var > 0.0 ? std::sqrt(y_var / static_cast<double>(y.size())) : 1.0;

    const std::size_t p = standardizer.mean.size();
    ParamStore params;
    params.add("mlp.hidden.weight", {p, opts.mlp_hidden});
    params.add("mlp.hidden.bias", {1, opts.mlp_hidden});
    params.add("mlp.out.weight", {opts.mlp_hidden, 1});
    params.add("mlp.out.bias", {1, 1});
    auto rng = derive_rng(seed, {0x313});
    for (std::size_t i = 0; i < params.count(); ++i) {
        const auto& info = params.info(i);
        if (info.name.ends_with(".bias")) continue;
        const double bound = 1.0 / std::sqrt(static_cast<double>(info.shape[0]));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& v : params.values(i)) v = u(rng);
    }
    const train::ModelFactory factory = [&](const ParamStore* ps) -> std::unique_ptr<train::SampleModel> {
        return std::make_unique<MlpModel>(ps, standardizer, y_mean, y_std);
    };
    train::TrainContext ctx;
    ctx.exec = opts.exec;
    auto r = train::fit(std::move(params), train, val, opts.mlp_stage, factory, seed, ctx);
    return train::evaluate(r.params, test, factory, opts.exec).prediction;
}

// ---------------------------------------------------------------------------
// Error reports

static GroupErrors group(const std::vector<ErrorRow>& rows, int which) {
    GroupErrors g;
    for (const auto& r : rows) {
        if (which == 1 && !r.drought) continue;
        if (which == 2 && r.drought) continue;
        ++g.n;
        g.mean_signed += r.signed_error;
        g.mean_abs += r.abs_error;
    }
    if (g.n == 0) return {0, kNaN, kNaN};
    g.mean_signed /= static_cast<double>(g.n);
    g.mean_abs /= static_cast<double>(g.n);
    return g;
}

ErrorReport error_report(std::span<const Sample> samples, std::span<const double> y_hat) {
    if (samples.size() != y_hat.size()) throw std::invalid_argument("error report: predictions not aligned with samples");
    ErrorReport rep;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const double e = y_hat[i] - s.yield;
        rep.rows.push_back({s.id, s.year, s.drought, s.yield, y_hat[i], e, std::abs(e)});
    }
    rep.all = group(rep.rows, 0);
    rep.drought = group(rep.rows, 1);
    rep.nondrought = group(rep.rows, 2);
    return rep;
}

void write_errors_csv(const std::filesystem::path& path, const ErrorReport& report) {
    CsvWriter w(path);
    w.row({"id", "year", "drought_flag", "y", "y_hat", "signed_error", "abs_error"});
    for (const auto& r : report.rows)
        w.row({r.id, std::to_string(r.year), r.drought ? "1" : "0", format_double(r.y), format_double(r.y_hat),
               format_double(r.signed_error), format_double(r.abs_error)});
}

std::vector<SmErrorRow> paired_errors(std::span<const Sample> samples, std::span<const double> y_hat,
                                      std::span<const Tensor> sm_hat) {
    if (samples.size() != y_hat.size() || samples.size() != sm_hat.size())
        throw std::invalid_argument("paired errors: inputs not aligned");
    std::vector<SmErrorRow> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (sm_hat[i].shape() != s.sm.shape()) throw ShapeError("paired errors: sm_hat shape mismatch");
        double e = 0.0;
        for (std::size_t k = 0; k < s.sm.size(); ++k) e += std::abs(sm_hat[i][k] - s.sm[k]);
        out.push_back({s.id, s.year, s.drought, std::abs(y_hat[i] - s.yield), e / static_cast<double>(s.sm.size())});
    }
    return out;
}

void write_sm_errors_csv(const std::filesystem::path& path, std::span<const SmErrorRow> rows) {
    CsvWriter w(path);
    w.row({"id", "year", "drought_flag", "yield_abs_error", "sm_abs_error"});
    for (const auto& r : rows)
        w.row({r.id, std::to_string(r.year), r.drought ? "1" : "0", format_double(r.yield_abs_error),
               format_double(r.sm_abs_error)});
}

}  // namespace kgmlsm::eval
