#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hkv/error.hpp"
#include "hkv/trace.hpp"

namespace hkv {

/// Value sizes: a log-normal body truncated below 1 KiB mixed with an exponential tail
/// starting at 1 KiB. The defaults give a mean of ~257 B with 80.67% of objects < 1 KiB.
struct SizeMixture {
    double small_fraction = 0.8067;
    double small_median = 40.0;
    double small_sigma = 0.8;
    std::uint32_t small_max = 1023;
    std::uint32_t large_min = 1024;
    double large_tail_mean = 75.7;

    template <class Rng>
    std::uint32_t sample(Rng& rng) const
    {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(rng) < small_fraction) {
            std::lognormal_distribution<double> body(std::log(small_median), small_sigma);
            for (;;) {
                const double x = std::round(body(rng));
                if (x <= static_cast<double>(small_max)) {
                    return static_cast<std::uint32_t>(std::max(1.0, x));
                }
            }
        }
        std::exponential_distribution<double> tail(1.0 / large_tail_mean);
        return large_min + static_cast<std::uint32_t>(std::round(tail(rng)));
    }
};

struct WorkloadSpec {
    std::uint64_t key_count = 100000;  // keys readable from the start (present at the origin)
    double zipf_alpha = 0.9;
    std::uint64_t op_count = 1000000;
    double write_ratio = 0.095;            // sets of fresh keys, as a fraction of all requests
    double update_fraction = 0.005;        // sets of existing keys
    double unread_write_fraction = 0.606;  // fresh writes never read afterwards
    double first_read_delay_mean = 1000;   // requests between a fresh write and its first read
    double duration_seconds = 172800;
    std::uint32_t tenants = 1;
    SizeMixture sizes;

    /// Request mix and sizes calibrated to the production trace statistics.
    static WorkloadSpec production_mix() { return WorkloadSpec{}; }

    void validate() const
    {
        auto fail = [](const std::string& what) { throw Error(ErrorCode::infeasible_spec, what); };
        auto fraction = [&](double v, const char* name) {
            if (!(v >= 0.0 && v <= 1.0)) {
                fail(std::string(name) + " must be in [0, 1]");
            }
        };
        fraction(write_ratio, "write_ratio");
        fraction(update_fraction, "update_fraction");
        fraction(unread_write_fraction, "unread_write_fraction");
        fraction(sizes.small_fraction, "sizes.small_fraction");
        if (write_ratio + update_fraction > 1.0 + 1e-12) {
            fail("write_ratio + update_fraction exceeds 1");
        }
        const double read_ratio = 1.0 - write_ratio - update_fraction;
        const double scheduled = write_ratio * (1.0 - unread_write_fraction);
        if (scheduled > read_ratio + 1e-12) {
            fail("read-back writes need more reads than the request mix provides");
        }
        if (read_ratio > 0.0 && key_count == 0 && unread_write_fraction >= 1.0) {
            fail("reads requested but no key is ever readable");
        }
        if (read_ratio > 0.0 && key_count == 0) {
            fail("key_count must be positive when the mix contains reads");
        }
        if (update_fraction > 0.0 && key_count == 0) {
            fail("updates need readable keys");
        }
        if (zipf_alpha < 0.0) {
            fail("zipf_alpha must be non-negative");
        }
        if (first_read_delay_mean < 1.0) {
            fail("first_read_delay_mean must be >= 1");
        }
        if (duration_seconds <= 0.0) {
            fail("duration_seconds must be positive");
        }
        if (tenants == 0) {
            fail("tenants must be >= 1");
        }
        if (sizes.small_max < 1 || sizes.large_min <= sizes.small_max || sizes.small_median <= 0 ||
            sizes.small_sigma <= 0 || sizes.large_tail_mean <= 0) {
            fail("invalid size mixture");
        }
    }

    nlohmann::json to_json() const
    {
        return nlohmann::json{{"key_count", key_count},
                              {"zipf_alpha", zipf_alpha},
                              {"op_count", op_count},
                              {"write_ratio", write_ratio},
                              {"update_fraction", update_fraction},
                              {"unread_write_fraction", unread_write_fraction},
                              {"first_read_delay_mean", first_read_delay_mean},
                              {"duration_seconds", duration_seconds},
                              {"tenants", tenants},
                              {"sizes",
                               {{"small_fraction", sizes.small_fraction},
                                {"small_median", sizes.small_median},
                                {"small_sigma", sizes.small_sigma},
                                {"small_max", sizes.small_max},
                                {"large_min", sizes.large_min},
                                {"large_tail_mean", sizes.large_tail_mean}}}};
    }

    /// Missing fields keep their defaults.
    static WorkloadSpec from_json(const nlohmann::json& j)
    {
        WorkloadSpec s;
        auto get = [&](const nlohmann::json& obj, const char* name, auto& field) {
            if (obj.contains(name)) {
                obj.at(name).get_to(field);
            }
        };
        try {
            get(j, "key_count", s.key_count);
            get(j, "zipf_alpha", s.zipf_alpha);
            get(j, "op_count", s.op_count);
            get(j, "write_ratio", s.write_ratio);
            get(j, "update_fraction", s.update_fraction);
            get(j, "unread_write_fraction", s.unread_write_fraction);
            get(j, "first_read_delay_mean", s.first_read_delay_mean);
            get(j, "duration_seconds", s.duration_seconds);
            get(j, "tenants", s.tenants);
            if (j.contains("sizes")) {
                const auto& z = j.at("sizes");
                get(z, "small_fraction", s.sizes.small_fraction);
                get(z, "small_median", s.sizes.small_median);
                get(z, "small_sigma", s.sizes.small_sigma);
                get(z, "small_max", s.sizes.small_max);
                get(z, "large_min", s.sizes.large_min);
                get(z, "large_tail_mean", s.sizes.large_tail_mean);
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse_error, std::string("workload spec: ") + e.what());
        }
        return s;
    }

    static WorkloadSpec load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw Error(ErrorCode::io_error, "cannot open workload spec " + path);
        }
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::parse_error, std::string("workload spec: ") + e.what());
        }
    }
};

/// Fenwick tree over non-negative weights supporting weighted sampling.
class WeightTree {
public:
    explicit WeightTree(std::size_t capacity) : tree_(capacity + 1, 0.0) {}

    void add(std::size_t i, double w)
    {
        total_ += w;
        for (std::size_t k = i + 1; k < tree_.size(); k += k & (~k + 1)) {
            tree_[k] += w;
        }
    }

    double total() const noexcept { return total_; }

    /// Smallest index whose prefix sum exceeds `target`.
    std::size_t find(double target) const
    {
        std::size_t pos = 0;
        std::size_t step = std::bit_floor(tree_.size() - 1);
        for (; step > 0; step >>= 1) {
            const std::size_t next = pos + step;
            if (next < tree_.size() && tree_[next] <= target) {
                pos = next;
                target -= tree_[next];
            }
        }
        return std::min(pos, tree_.size() - 2);
    }

private:
    std::vector<double> tree_;
    double total_ = 0.0;
};

struct WorkloadStats {
    std::uint64_t gets = 0;
    std::uint64_t fresh_writes = 0;
    std::uint64_t unread_writes = 0;  // fresh writes never scheduled for a read
    std::uint64_t updates = 0;
    std::uint64_t objects = 0;
    double mean_size = 0.0;
    double small_fraction = 0.0;  // objects below 1 KiB
};

/// Seed-deterministic synthetic trace. Preloaded keys (present at the origin, never
/// written in the trace) carry Zipf weights rank^-alpha. Fresh writes are either never
/// read or get a first read after a geometric delay and then join the readable pool with
/// a weight drawn from the same Zipf ranks. Updates rewrite a readable key picked by weight.
class WorkloadGenerator {
public:
    WorkloadGenerator(WorkloadSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(seed)
    {
        spec_.validate();
    }

    std::vector<TraceEvent> generate()
    {
        const std::uint64_t n = spec_.op_count;
        const std::uint64_t capacity = spec_.key_count + n;
        WeightTree weights(std::max<std::uint64_t>(capacity, 1));
        std::vector<std::uint32_t> size_of;
        size_of.reserve(capacity);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<std::uint64_t> rank_pick(1, std::max<std::uint64_t>(spec_.key_count, 1));
        std::geometric_distribution<std::uint64_t> delay(1.0 / spec_.first_read_delay_mean);

        auto weight_of_rank = [&](std::uint64_t rank) {
            return std::pow(static_cast<double>(rank), -spec_.zipf_alpha);
        };
        double size_sum = 0.0;
        std::uint64_t small = 0;
        auto new_size = [&] {
            const std::uint32_t s = spec_.sizes.sample(rng_);
            size_sum += s;
            small += s < 1024;
            ++stats_.objects;
            return s;
        };

        for (std::uint64_t id = 0; id < spec_.key_count; ++id) {
            size_of.push_back(new_size());
            weights.add(id, weight_of_rank(id + 1));
        }

        using Due = std::pair<std::uint64_t, std::uint64_t>;  // (request index, key id)
        std::priority_queue<Due, std::vector<Due>, std::greater<>> scheduled;
        std::vector<TraceEvent> events;
        events.reserve(n);
        std::uint64_t next_id = spec_.key_count;

        for (std::uint64_t i = 0; i < n; ++i) {
            TraceEvent ev;
            ev.timestamp_us =
                static_cast<std::uint64_t>(spec_.duration_seconds * 1e6 * static_cast<double>(i) / static_cast<double>(n));
            const double u = unit(rng_);
            std::uint64_t id;
            if (u < spec_.write_ratio) {
                id = next_id++;
                size_of.push_back(new_size());
                ev.op = Op::set;
                ++stats_.fresh_writes;
                if (unit(rng_) < spec_.unread_write_fraction) {
                    ++stats_.unread_writes;
                } else {
                    scheduled.emplace(i + 1 + delay(rng_), id);
                }
            } else if (u < spec_.write_ratio + spec_.update_fraction) {
                id = weights.find(unit(rng_) * weights.total());
                size_of[id] = new_size();
                ev.op = Op::set;
                ++stats_.updates;
            } else {
                if (!scheduled.empty() && scheduled.top().first <= i) {
                    id = scheduled.top().second;
                    scheduled.pop();
                    weights.add(id, weight_of_rank(rank_pick(rng_)));
                } else {
                    id = weights.find(unit(rng_) * weights.total());
                }
                ev.op = Op::get;
                ++stats_.gets;
            }
            ev.key = "k" + std::to_string(id);
            ev.tenant = "app" + std::to_string(id % spec_.tenants + 1);
            ev.value_size = size_of[id];
            events.push_back(std::move(ev));
        }
        // Read-back writes whose first read fell past the end stay unread.
        stats_.unread_writes += scheduled.size();
        stats_.mean_size = stats_.objects == 0 ? 0.0 : size_sum / static_cast<double>(stats_.objects);
        stats_.small_fraction = stats_.objects == 0 ? 0.0 : static_cast<double>(small) / static_cast<double>(stats_.objects);
        return events;
    }

    const WorkloadStats& stats() const noexcept { return stats_; }

private:
    WorkloadSpec spec_;
    std::mt19937_64 rng_;
    WorkloadStats stats_;
};

inline std::vector<TraceEvent> generate_workload(const WorkloadSpec& spec, std::uint64_t seed)
{
    return WorkloadGenerator(spec, seed).generate();
}

}  // namespace hkv
