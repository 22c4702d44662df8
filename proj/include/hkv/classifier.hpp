#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hkv/config.hpp"
#include "hkv/core.hpp"
#include "hkv/dram_store.hpp"

namespace hkv {

inline constexpr std::size_t kFeatureCount = 5;

struct Model {
    FeatureVector weights{};
    double bias = 0.0;
    FeatureVector means{};
    FeatureVector stdevs{1, 1, 1, 1, 1};
    Timestamp trained_at;
    std::string tenant;

    FeatureVector standardize(const FeatureVector& f) const
    {
        FeatureVector z{};
        for (std::size_t i = 0; i < kFeatureCount; ++i) {
            z[i] = (f[i] - means[i]) / stdevs[i];
        }
        return z;
    }

    double margin(const FeatureVector& f) const
    {
        const FeatureVector z = standardize(f);
        return std::inner_product(z.begin(), z.end(), weights.begin(), bias);
    }

    friend bool operator==(const Model&, const Model&) = default;
};

/// Flashiness score. Never-read objects score 0; with a model the signed margin; before
/// a model exists the read-count rule read_count - n + 1/2.
inline double flashiness(const Model* model, const std::optional<FeatureVector>& features,
                         std::uint32_t read_threshold)
{
    if (!features) {
        return 0.0;
    }
    if (model != nullptr) {
        return model->margin(*features);
    }
    return (*features)[0] - static_cast<double>(read_threshold) + 0.5;
}

/// Size-one reservoir over an object's reads: the read_count-th read replaces the held
/// sample with probability 1/read_count.
template <class Rng>
bool reservoir_accept(std::uint32_t read_count, Rng& rng)
{
    if (read_count <= 1) {
        return true;
    }
    std::uniform_int_distribution<std::uint32_t> pick(0, read_count - 1);
    return pick(rng) == 0;
}

struct TrainingSample {
    Key key;
    FeatureVector features{};
    Timestamp sampled_at;
    std::uint32_t label_reads = 0;

    bool label(std::uint32_t read_threshold) const noexcept { return label_reads >= read_threshold; }
};

enum class AccessKind { read, update, evict };

struct AccessEvent {
    Key key;
    Timestamp time;
    AccessKind kind = AccessKind::read;
};

/// Counts each sample's reads in (sampled_at, sampled_at + window], stopping at the
/// first update or eviction of the key after sampled_at.
inline std::vector<TrainingSample> harvest_labels(std::vector<TrainingSample> samples,
                                                  const std::vector<AccessEvent>& log, Duration window)
{
    std::unordered_map<Key, std::size_t> by_key;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].label_reads = 0;
        by_key.emplace(samples[i].key, i);
    }
    std::vector<bool> closed(samples.size(), false);
    std::vector<std::size_t> order(log.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return log[a].time < log[b].time; });
    for (std::size_t idx : order) {
        const AccessEvent& ev = log[idx];
        auto it = by_key.find(ev.key);
        if (it == by_key.end() || closed[it->second]) {
            continue;
        }
        TrainingSample& s = samples[it->second];
        if (ev.time <= s.sampled_at) {
            continue;
        }
        if (ev.time > s.sampled_at + window) {
            closed[it->second] = true;
            continue;
        }
        if (ev.kind == AccessKind::read) {
            ++s.label_reads;
        } else {
            closed[it->second] = true;
        }
    }
    return samples;
}

struct TrainOptions {
    std::uint32_t read_threshold = 1;
    double lambda = 1e-4;
    unsigned epochs = 50;
    std::size_t min_samples = 50;
    std::uint64_t seed = 42;
};

/// Linear SVM: standardized features, class-weighted hinge loss with L2 regularization,
/// stochastic subgradient descent under a seeded shuffle. Positives are weighted by the
/// negative:positive ratio; when the learned direction separates the training set the
/// bias is moved to the midpoint of the gap. Returns nullopt (deferred) with too few
/// samples or a single class.
inline std::optional<Model> train(const std::vector<TrainingSample>& samples, const TrainOptions& options)
{
    const std::size_t m = samples.size();
    if (m < options.min_samples) {
        return std::nullopt;
    }
    std::vector<int> y(m);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < m; ++i) {
        y[i] = samples[i].label(options.read_threshold) ? 1 : -1;
        positives += y[i] > 0;
    }
    if (positives == 0 || positives == m) {
        return std::nullopt;
    }

    Model model;
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
        double sum = 0.0;
        for (const auto& s : samples) {
            sum += s.features[j];
        }
        const double mean = sum / static_cast<double>(m);
        double var = 0.0;
        for (const auto& s : samples) {
            var += (s.features[j] - mean) * (s.features[j] - mean);
        }
        const double sd = std::sqrt(var / static_cast<double>(m));
        model.means[j] = mean;
        model.stdevs[j] = sd > 1e-12 ? sd : 1.0;
    }
    std::vector<FeatureVector> x(m);
    for (std::size_t i = 0; i < m; ++i) {
        x[i] = model.standardize(samples[i].features);
    }

    const double pos_weight = static_cast<double>(m - positives) / static_cast<double>(positives);
    const double lambda = options.lambda;
    constexpr double eta0 = 0.1;
    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    FeatureVector w{};
    double b = 0.0;
    std::uint64_t t = 0;
    for (unsigned epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i : order) {
            const double eta = eta0 / (1.0 + lambda * eta0 * static_cast<double>(t++));
            const double score = std::inner_product(w.begin(), w.end(), x[i].begin(), b);
            for (auto& wj : w) {
                wj *= 1.0 - eta * lambda;
            }
            if (y[i] * score < 1.0) {
                const double c = (y[i] > 0 ? pos_weight : 1.0) * y[i] * eta;
                for (std::size_t j = 0; j < kFeatureCount; ++j) {
                    w[j] += c * x[i][j];
                }
                b += c;
            }
        }
    }
    model.weights = w;
    model.bias = b;

    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
        const double p = std::inner_product(w.begin(), w.end(), x[i].begin(), 0.0);
        if (y[i] > 0) {
            min_pos = std::min(min_pos, p);
        } else {
            max_neg = std::max(max_neg, p);
        }
    }
    if (min_pos > max_neg) {
        model.bias = -(min_pos + max_neg) / 2.0;
    }
    return model;
}

inline std::string serialize_model(const Model& model)
{
    std::ostringstream out;
    out << std::setprecision(17);
    auto row = [&](const char* name, const FeatureVector& v) {
        out << name;
        for (double d : v) {
            out << ' ' << d;
        }
        out << '\n';
    };
    out << "hkv-model 1\n";
    out << "tenant " << (model.tenant.empty() ? "-" : model.tenant) << '\n';
    row("weights", model.weights);
    out << "bias " << model.bias << '\n';
    row("means", model.means);
    row("stdevs", model.stdevs);
    out << "trained_at " << model.trained_at.micros << '\n';
    return out.str();
}

inline Model parse_model(const std::string& text)
{
    std::istringstream in(text);
    auto fail = [](const std::string& what) { throw Error(ErrorCode::parse_error, "model: " + what); };
    auto expect = [&](const char* name) {
        std::string word;
        if (!(in >> word) || word != name) {
            fail(std::string("expected '") + name + "'");
        }
    };
    auto row = [&](const char* name, FeatureVector& v) {
        expect(name);
        for (double& d : v) {
            if (!(in >> d)) {
                fail(std::string("bad ") + name);
            }
        }
    };
    Model model;
    int version = 0;
    expect("hkv-model");
    if (!(in >> version) || version != 1) {
        fail("unsupported version");
    }
    expect("tenant");
    in >> model.tenant;
    if (model.tenant == "-") {
        model.tenant.clear();
    }
    row("weights", model.weights);
    expect("bias");
    in >> model.bias;
    row("means", model.means);
    row("stdevs", model.stdevs);
    expect("trained_at");
    if (!(in >> model.trained_at.micros)) {
        fail("bad trained_at");
    }
    for (double sd : model.stdevs) {
        if (!(sd > 0.0)) {
            fail("stdevs must be positive");
        }
    }
    return model;
}

inline void save_model(const Model& model, const std::string& path)
{
    std::ofstream out(path);
    out << serialize_model(model);
    if (!out) {
        throw Error(ErrorCode::io_error, "cannot write model to " + path);
    }
}

inline Model load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot read model from " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_model(buf.str());
}

/// One tenant's admission filter: samples DRAM reads during the training window, counts
/// labels online over the following label window, and trains once both have elapsed.
class TenantClassifier {
public:
    TenantClassifier(std::string tenant, const EngineConfig& config)
        : tenant_(std::move(tenant)), threshold_(config.flashiness_read_threshold),
          training_window_(config.training_window), label_window_(config.label_window),
          retrain_interval_(config.retrain_interval),
          options_{config.flashiness_read_threshold, config.svm_lambda, config.svm_epochs,
                   config.min_training_samples, config.seed},
          rng_(config.seed ^ std::hash<std::string>{}(tenant_))
    {
    }

    /// DRAM read of a feature-bearing object. Returns true when the sample was replaced.
    bool on_dram_read(const Key& key, const FeatureVector& features, std::uint32_t read_count, Timestamp now)
    {
        start(now);
        count_label(key, now);
        if (now >= window_start_ + training_window_) {
            return false;
        }
        if (!reservoir_accept(read_count, rng_)) {
            return false;
        }
        pending_.insert_or_assign(key, Pending{features, now, 0, false});
        return true;
    }

    /// Any other read of the key (flash hit).
    void on_read(const Key& key, Timestamp now)
    {
        start(now);
        count_label(key, now);
    }

    /// Update, delete, or eviction: the key's label stops counting.
    void on_remove(const Key& key)
    {
        if (auto it = pending_.find(key); it != pending_.end()) {
            it->second.closed = true;
        }
    }

    void observe(Timestamp now) { start(now); }

    /// Trains when the label window after the training window has elapsed. Returns true
    /// when a new model was installed.
    bool maybe_train(Timestamp now)
    {
        if (!started_ || now < window_start_ + training_window_ + label_window_) {
            return false;
        }
        if (attempted_ && (retrain_interval_.count() == 0 || now < last_attempt_ + retrain_interval_)) {
            return false;
        }
        std::vector<TrainingSample> samples = snapshot();
        attempted_ = true;
        last_attempt_ = now;
        pending_.clear();
        if (retrain_interval_.count() != 0) {
            window_start_ = now;
        }
        std::optional<Model> fresh = train(samples, options_);
        if (!fresh) {
            ++deferred_;
            return false;
        }
        fresh->trained_at = now;
        fresh->tenant = tenant_;
        model_ = std::make_shared<const Model>(std::move(*fresh));
        return true;
    }

    /// Current samples with their online label counts.
    std::vector<TrainingSample> snapshot() const
    {
        std::vector<TrainingSample> out;
        out.reserve(pending_.size());
        for (const auto& [key, p] : pending_) {
            out.push_back(TrainingSample{key, p.features, p.sampled_at, p.label_reads});
        }
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
        return out;
    }

    double score(const std::optional<FeatureVector>& features) const
    {
        return flashiness(model_.get(), features, threshold_);
    }

    std::shared_ptr<const Model> model() const { return model_; }
    void set_model(Model model) { model_ = std::make_shared<const Model>(std::move(model)); }
    const std::string& tenant() const noexcept { return tenant_; }
    std::size_t pending_samples() const noexcept { return pending_.size(); }
    std::uint64_t deferred_trainings() const noexcept { return deferred_; }
    bool in_training_window(Timestamp now) const noexcept
    {
        return started_ && now < window_start_ + training_window_;
    }

private:
    struct Pending {
        FeatureVector features;
        Timestamp sampled_at;
        std::uint32_t label_reads = 0;
        bool closed = false;
    };

    void start(Timestamp now)
    {
        if (!started_) {
            started_ = true;
            window_start_ = now;
        }
    }

    void count_label(const Key& key, Timestamp now)
    {
        auto it = pending_.find(key);
        if (it == pending_.end() || it->second.closed) {
            return;
        }
        Pending& p = it->second;
        if (now <= p.sampled_at) {
            return;
        }
        if (now > p.sampled_at + label_window_) {
            p.closed = true;
            return;
        }
        ++p.label_reads;
    }

    std::string tenant_;
    std::uint32_t threshold_;
    Duration training_window_;
    Duration label_window_;
    Duration retrain_interval_;
    TrainOptions options_;
    std::mt19937_64 rng_;
    bool started_ = false;
    Timestamp window_start_;
    bool attempted_ = false;
    Timestamp last_attempt_;
    std::unordered_map<Key, Pending> pending_;
    std::shared_ptr<const Model> model_;
    std::uint64_t deferred_ = 0;
};

}  // namespace hkv
