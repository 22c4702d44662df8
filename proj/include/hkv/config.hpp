#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hkv/core.hpp"
#include "hkv/hash.hpp"

namespace hkv {

inline constexpr std::uint64_t KiB = 1024;
inline constexpr std::uint64_t MiB = 1024 * KiB;
inline constexpr std::uint64_t GiB = 1024 * MiB;

/// Largest number of simultaneously live segments; sequence numbers are stored in 24 bits.
inline constexpr std::uint64_t kMaxLiveSegments = std::uint64_t{1} << 24;

/// Average object size used to size the flash index when no slot count is configured.
inline constexpr std::uint64_t kExpectedObjectBytes = 256;

inline constexpr double kUnlimitedBudget = std::numeric_limits<double>::infinity();

struct EngineConfig {
    std::uint64_t dram_capacity = 4 * GiB;
    std::uint64_t flash_capacity = 32 * GiB;
    std::uint64_t segment_size = 512 * MiB;
    std::size_t num_hash_functions = 16;
    unsigned clock_bits = 2;
    double bloom_fp_rate = 0.01;
    double hot_fraction = 0.70;
    std::uint32_t flashiness_read_threshold = 1;
    double flash_write_budget = kUnlimitedBudget;  // bytes per second
    Duration training_window = hours(24);
    Duration label_window = hours(1);
    Duration retrain_interval{0};  // zero disables periodic retraining
    std::uint64_t index_slots = 0;  // zero selects flash_capacity / 256, rounded up to a power of two
    std::uint64_t probe_read_size = 4096;
    std::uint64_t hash_seed = kDefaultHashSeed;
    std::uint64_t seed = 42;
    double svm_lambda = 1e-4;
    unsigned svm_epochs = 50;
    std::size_t min_training_samples = 50;

    /// Small-scale configuration used throughout the tests: 4 MiB segments, DRAM:flash 1:7.
    static EngineConfig test_defaults()
    {
        EngineConfig config;
        config.segment_size = 4 * MiB;
        config.flash_capacity = 224 * MiB;
        config.dram_capacity = 32 * MiB;
        return config;
    }

    std::uint64_t segment_count() const noexcept { return flash_capacity / segment_size; }

    std::uint64_t table_slots() const noexcept
    {
        if (index_slots != 0) {
            return index_slots;
        }
        return std::bit_ceil(std::max<std::uint64_t>(1, flash_capacity / kExpectedObjectBytes));
    }

    std::uint64_t table_bytes() const noexcept { return 4 * table_slots(); }

    /// DRAM left for object storage after the flash index and the flash-bound staging
    /// segment are set aside.
    std::uint64_t store_capacity() const noexcept
    {
        const std::uint64_t reserved = table_bytes() + segment_size;
        return dram_capacity > reserved ? dram_capacity - reserved : 0;
    }

    /// Object capacity excluding one segment of headroom kept free for incoming writes.
    std::uint64_t dram_usable() const noexcept
    {
        const std::uint64_t store = store_capacity();
        return store > segment_size ? store - segment_size : 0;
    }

    std::uint8_t clock_max() const noexcept { return static_cast<std::uint8_t>((1u << clock_bits) - 1); }

    bool budget_unlimited() const noexcept { return std::isinf(flash_write_budget); }

    void validate() const
    {
        auto fail = [](const std::string& what) { throw Error(ErrorCode::invalid_config, what); };
        if (segment_size < 4 * KiB) {
            fail("segment_size must be at least 4 KiB");
        }
        if (flash_capacity == 0 || flash_capacity % segment_size != 0) {
            fail("flash_capacity must be a positive multiple of segment_size");
        }
        if (segment_count() > kMaxLiveSegments) {
            fail("flash_capacity / segment_size exceeds the 2^24 live segment window");
        }
        if (dram_capacity <= 2 * segment_size) {
            fail("dram_capacity must exceed 2 x segment_size");
        }
        if (dram_usable() == 0) {
            fail("dram_capacity too small for flash index plus two segments of headroom");
        }
        if (num_hash_functions < 1 || num_hash_functions > kMaxHashFunctions) {
            fail("num_hash_functions must be in 1..16");
        }
        if (clock_bits < 1 || clock_bits > 2) {
            fail("clock_bits must be 1 or 2 (the index entry holds 2 CLOCK bits)");
        }
        if (!(bloom_fp_rate > 0.0 && bloom_fp_rate < 1.0)) {
            fail("bloom_fp_rate must be in (0,1)");
        }
        if (!(hot_fraction > 0.0 && hot_fraction <= 1.0)) {
            fail("hot_fraction must be in (0,1]");
        }
        if (flashiness_read_threshold < 1) {
            fail("flashiness_read_threshold must be >= 1");
        }
        if (!(flash_write_budget >= 0.0)) {
            fail("flash_write_budget must be >= 0");
        }
        if (index_slots != 0 && !std::has_single_bit(index_slots)) {
            fail("index_slots must be a power of two");
        }
        if (probe_read_size < kMaxKeyLength + 5 || probe_read_size > segment_size) {
            fail("probe_read_size must be in [255, segment_size]");
        }
        if (training_window.count() < 0 || label_window.count() < 0 || retrain_interval.count() < 0) {
            fail("windows must be non-negative");
        }
        if (svm_epochs == 0 || !(svm_lambda > 0.0)) {
            fail("svm_epochs and svm_lambda must be positive");
        }
    }

    /// Sets one field from its textual form (the same syntax as the config file).
    void set(std::string_view name, std::string_view value);

    /// Names of every settable field, in file order.
    static const std::vector<std::string>& field_names();

    /// Serializes to the flat key=value format accepted by load().
    std::string to_string() const;

    /// Applies `key = value` lines on top of `base`; '#' starts a comment.
    static EngineConfig parse(std::string_view text, EngineConfig base);
    static EngineConfig parse(std::string_view text);
    static EngineConfig load(const std::string& path, EngineConfig base);
    static EngineConfig load(const std::string& path);
};

namespace config_detail {

inline std::string trim(std::string_view s)
{
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) {
        return {};
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

inline std::string lower(std::string s)
{
    for (auto& c : s) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return s;
}

/// Splits "12.5MiB" into (12.5, "mib").
inline std::pair<double, std::string> split_number(std::string_view field, std::string_view text)
{
    const std::string s = trim(text);
    std::size_t consumed = 0;
    double number = 0.0;
    try {
        number = std::stod(s, &consumed);
    } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_config, std::string(field) + ": expected a number, got '" + s + "'");
    }
    return {number, lower(trim(std::string_view(s).substr(consumed)))};
}

inline std::uint64_t parse_bytes(std::string_view field, std::string_view text)
{
    auto [number, unit] = split_number(field, text);
    double scale = 1.0;
    if (unit.empty() || unit == "b") {
        scale = 1.0;
    } else if (unit == "k" || unit == "kb" || unit == "kib") {
        scale = static_cast<double>(KiB);
    } else if (unit == "m" || unit == "mb" || unit == "mib") {
        scale = static_cast<double>(MiB);
    } else if (unit == "g" || unit == "gb" || unit == "gib") {
        scale = static_cast<double>(GiB);
    } else {
        throw Error(ErrorCode::invalid_config, std::string(field) + ": unknown size unit '" + unit + "'");
    }
    if (number < 0) {
        throw Error(ErrorCode::invalid_config, std::string(field) + ": negative size");
    }
    return static_cast<std::uint64_t>(std::llround(number * scale));
}

/// Plain numbers are seconds.
inline Duration parse_duration(std::string_view field, std::string_view text)
{
    auto [number, unit] = split_number(field, text);
    double micros_per_unit = 1e6;
    if (unit == "us") {
        micros_per_unit = 1.0;
    } else if (unit == "ms") {
        micros_per_unit = 1e3;
    } else if (unit.empty() || unit == "s") {
        micros_per_unit = 1e6;
    } else if (unit == "m" || unit == "min") {
        micros_per_unit = 60e6;
    } else if (unit == "h") {
        micros_per_unit = 3600e6;
    } else if (unit == "d") {
        micros_per_unit = 86400e6;
    } else {
        throw Error(ErrorCode::invalid_config, std::string(field) + ": unknown duration unit '" + unit + "'");
    }
    return Duration(static_cast<std::int64_t>(std::llround(number * micros_per_unit)));
}

inline double parse_real(std::string_view field, std::string_view text)
{
    auto [number, unit] = split_number(field, text);
    if (!unit.empty()) {
        throw Error(ErrorCode::invalid_config, std::string(field) + ": unexpected suffix '" + unit + "'");
    }
    return number;
}

inline std::uint64_t parse_uint(std::string_view field, std::string_view text)
{
    const std::string s = trim(text);
    std::size_t consumed = 0;
    unsigned long long value = 0;
    try {
        value = std::stoull(s, &consumed, 0);
    } catch (const std::exception&) {
        consumed = 0;
    }
    if (consumed != s.size() || s.empty() || s[0] == '-') {
        throw Error(ErrorCode::invalid_config, std::string(field) + ": expected an unsigned integer, got '" + s + "'");
    }
    return value;
}

struct Field {
    std::string name;
    std::function<void(EngineConfig&, std::string_view)> set;
    std::function<std::string(const EngineConfig&)> get;
};

inline std::string format_real(double v)
{
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

inline std::string format_duration(Duration d) { return std::to_string(d.count()) + "us"; }

inline const std::vector<Field>& fields()
{
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        auto bytes = [&f](std::string name, std::uint64_t EngineConfig::*member) {
            f.push_back({name,
                         [name, member](EngineConfig& c, std::string_view v) { c.*member = parse_bytes(name, v); },
                         [member](const EngineConfig& c) { return std::to_string(c.*member); }});
        };
        auto uint = [&f](std::string name, auto member) {
            f.push_back({name,
                         [name, member](EngineConfig& c, std::string_view v) {
                             using T = std::remove_reference_t<decltype(c.*member)>;
                             c.*member = static_cast<T>(parse_uint(name, v));
                         },
                         [member](const EngineConfig& c) { return std::to_string(c.*member); }});
        };
        auto real = [&f](std::string name, double EngineConfig::*member) {
            f.push_back({name,
                         [name, member](EngineConfig& c, std::string_view v) { c.*member = parse_real(name, v); },
                         [member](const EngineConfig& c) { return format_real(c.*member); }});
        };
        auto duration = [&f](std::string name, Duration EngineConfig::*member) {
            f.push_back({name,
                         [name, member](EngineConfig& c, std::string_view v) { c.*member = parse_duration(name, v); },
                         [member](const EngineConfig& c) { return format_duration(c.*member); }});
        };

        bytes("dram_capacity", &EngineConfig::dram_capacity);
        bytes("flash_capacity", &EngineConfig::flash_capacity);
        bytes("segment_size", &EngineConfig::segment_size);
        uint("num_hash_functions", &EngineConfig::num_hash_functions);
        uint("clock_bits", &EngineConfig::clock_bits);
        real("bloom_fp_rate", &EngineConfig::bloom_fp_rate);
        real("hot_fraction", &EngineConfig::hot_fraction);
        uint("flashiness_read_threshold", &EngineConfig::flashiness_read_threshold);
        f.push_back({"flash_write_budget",
                     [](EngineConfig& c, std::string_view v) {
                         const std::string s = lower(trim(v));
                         if (s == "unlimited" || s == "inf") {
                             c.flash_write_budget = kUnlimitedBudget;
                         } else {
                             c.flash_write_budget = static_cast<double>(parse_bytes("flash_write_budget", s));
                         }
                     },
                     [](const EngineConfig& c) {
                         return c.budget_unlimited() ? std::string("unlimited") : format_real(c.flash_write_budget);
                     }});
        duration("training_window", &EngineConfig::training_window);
        duration("label_window", &EngineConfig::label_window);
        duration("retrain_interval", &EngineConfig::retrain_interval);
        uint("index_slots", &EngineConfig::index_slots);
        bytes("probe_read_size", &EngineConfig::probe_read_size);
        uint("hash_seed", &EngineConfig::hash_seed);
        uint("seed", &EngineConfig::seed);
        real("svm_lambda", &EngineConfig::svm_lambda);
        uint("svm_epochs", &EngineConfig::svm_epochs);
        uint("min_training_samples", &EngineConfig::min_training_samples);
        return f;
    }();
    return table;
}

}  // namespace config_detail

inline void EngineConfig::set(std::string_view name, std::string_view value)
{
    for (const auto& field : config_detail::fields()) {
        if (field.name == name) {
            field.set(*this, value);
            return;
        }
    }
    throw Error(ErrorCode::invalid_config, "unknown config key '" + std::string(name) + "'");
}

inline const std::vector<std::string>& EngineConfig::field_names()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& field : config_detail::fields()) {
            out.push_back(field.name);
        }
        return out;
    }();
    return names;
}

inline std::string EngineConfig::to_string() const
{
    std::string out;
    for (const auto& field : config_detail::fields()) {
        out += field.name + " = " + field.get(*this) + "\n";
    }
    return out;
}

inline EngineConfig EngineConfig::parse(std::string_view text, EngineConfig base)
{
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string trimmed = config_detail::trim(line);
        if (trimmed.empty()) {
            continue;
        }
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::invalid_config, "line " + std::to_string(line_no) + ": expected key = value");
        }
        base.set(config_detail::trim(std::string_view(trimmed).substr(0, eq)),
                 config_detail::trim(std::string_view(trimmed).substr(eq + 1)));
    }
    return base;
}

inline EngineConfig EngineConfig::parse(std::string_view text) { return parse(text, EngineConfig{}); }

inline EngineConfig EngineConfig::load(const std::string& path) { return load(path, EngineConfig{}); }

inline EngineConfig EngineConfig::load(const std::string& path, EngineConfig base)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open config file " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), std::move(base));
}

}  // namespace hkv
