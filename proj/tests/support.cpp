#include "support.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "kgmlsm/loss.hpp"
#include "kgmlsm/model.hpp"
#include "kgmlsm/rng.hpp"

namespace kgmlsm::testing {

Sample random_sample(std::mt19937_64& rng, int year, std::string id) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Sample s;
    s.id = std::move(id);
    s.year = year;
    s.lat = 38.0 + 6.0 * u(rng);
    s.lon = -97.0 + 10.0 * u(rng);
    s.hist_avg_yield = 9.0 + 3.0 * u(rng);
    for (std::size_t t = 0; t < kTimesteps; ++t) {
        s.weather(t, 0) = 10.0 + 15.0 * u(rng);
        s.weather(t, 1) = 20.0 + 12.0 * u(rng);
        s.weather(t, 2) = 6.0 + 12.0 * u(rng);
        s.weather(t, 3) = 60.0 * u(rng);
        for (std::size_t c = 0; c < kViChannels; ++c) s.vis(t, c) = u(rng);
        s.sm(t, 0) = 0.1 + 0.3 * u(rng);
        s.sm(t, 1) = 0.15 + 0.25 * u(rng);
    }
    double total = 0.0;
    for (double v : s.sm.data()) total += v;
    s.sbar = total / static_cast<double>(s.sm.size());
    s.yield = 6.0 + 8.0 * u(rng);
    s.drought = s.sbar < 0.22;
    return s;
}

std::vector<Sample> random_samples(std::size_t n, std::uint64_t seed, int first_year, int last_year) {
    std::mt19937_64 rng(seed);
    std::vector<Sample> out;
    const int span = last_year - first_year + 1;
    for (std::size_t i = 0; i < n; ++i) {
        const int year = first_year + static_cast<int>(i % static_cast<std::size_t>(span));
        out.push_back(random_sample(rng, year, "T" + std::to_string(i / static_cast<std::size_t>(span))));
    }
    return out;
}

GradCheck check_gradients(ParamStore& params, std::span<const double> analytic, const std::function<double()>& loss,
                          double h, double floor_scale) {
    GradCheck r;
    const double base = loss();
    const double floor = floor_scale * std::max(1.0, std::abs(base));
    auto flat = params.flat();
    for (std::size_t k = 0; k < flat.size(); ++k) {
        const double orig = flat[k];
        flat[k] = orig + h;
        const double up = loss();
        flat[k] = orig - h;
        const double down = loss();
        flat[k] = orig;
        ++r.checked;
        const double fwd = (up - base) / h, bwd = (base - down) / h;
        if (std::abs(fwd - bwd) > 1e-3 * std::max({std::abs(fwd), std::abs(bwd), floor})) {
            ++r.kinks;
            continue;
        }
        const double numeric = (up - down) / (2.0 * h);
        const double rel = std::abs(numeric - analytic[k]) / std::max({std::abs(numeric), std::abs(analytic[k]), floor});
        if (rel > r.max_rel_error) {
            r.max_rel_error = rel;
            r.worst_index = k;
        }
    }
    loss();
    return r;
}

GradCheck full_model_gradcheck(std::uint64_t seed) {
    const auto samples = random_samples(8, seed + 100);
    const model::Architecture arch;
    const auto scaler = model::Scaler::fit(samples);
    auto params = model::init_params(arch, seed);
    auto rng = derive_rng(seed, {0x6C});
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (double& v : params.flat()) v += u(rng);

    GradCheck worst;
    for (double offset : {+1.5, -1.5}) {
        model::Network net(arch, scaler, &params, {true, 2.0, true});
        Sample s = samples[offset > 0 ? 0 : 1];
        net.set_sample(s);
        net.forward();
        s.yield = net.y_hat() - offset;  // offset > 0: the model overestimates
        const double weight = loss::drought_weight(s.sbar, 1.0);
        net.set_sample(s, weight);
        net.forward();
        Gradients grads(params);
        net.backward(grads, 1.0);
        const auto r = check_gradients(params, grads.flat(), [&] {
            net.forward();
            return net.loss();
        });
        const auto checked = worst.checked + r.checked, kinks = worst.kinks + r.kinks;
        if (r.max_rel_error >= worst.max_rel_error) worst = r;
        worst.checked = checked;
        worst.kinks = kinks;
    }
    return worst;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("kgmlsm_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace kgmlsm::testing
