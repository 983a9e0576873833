#pragma once

// Seeded synthetic block workloads.

#include <cstdint>
#include <algorithm>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "vbcache/trace.hpp"

namespace vbcache {

struct SizeDistribution {
    enum class Kind { fixed, uniform_set, empirical };
    Kind kind = Kind::fixed;
    std::vector<std::uint64_t> sizes{4096};
    /// Cumulative probabilities matching `sizes` (empirical only); last entry is 1.
    std::vector<double> cdf;

    static SizeDistribution fixed(std::uint64_t size);
    static SizeDistribution uniform_set(std::vector<std::uint64_t> sizes);
    static SizeDistribution empirical(std::vector<std::uint64_t> sizes, std::vector<double> cdf);
    /// "size,cdf" rows, ascending; sizes accept K/M suffixes; '#' comments.
    static SizeDistribution load_cdf(const std::filesystem::path& path);

    /// Probability mass of each entry of `sizes`.
    std::vector<double> probabilities() const;
};

struct LocalityModel {
    enum class Kind { uniform, zipfian, sequential };
    Kind kind = Kind::uniform;
    double zipf_exponent = 0.99;
    /// Address-space unit picked by the zipfian draw; 0 = 1 MiB.
    std::uint64_t zipf_granularity = 0;
    /// Sequential model: chance that a request continues the previous one on its device.
    double sequential_fraction = 0.8;
};

struct WorkloadSpec {
    std::uint64_t seed = 1;
    std::uint32_t devices = 1;
    std::uint64_t address_space = 1 * 1024 * 1024 * 1024ull;  // per device
    std::uint64_t offset_alignment = 4096;
    SizeDistribution sizes;
    double read_fraction = 0.7;
    LocalityModel locality;

    /// Throws std::invalid_argument on inconsistent parameters.
    void validate() const;
};

/// Rejection-inversion sampler over ranks 1..n with P(k) proportional to k^-s.
class ZipfSampler {
public:
    ZipfSampler(std::uint64_t n, double exponent);
    /// `u` uniform in [0,1); called repeatedly until a draw is accepted.
    template <typename Uniform>
    std::uint64_t operator()(Uniform&& u) const {
        while (true) {
            const double v = h_integral_n_ + u() * (h_integral_x1_ - h_integral_n_);
            const double x = h_integral_inverse(v);
            auto k = static_cast<std::uint64_t>(x + 0.5);
            k = std::clamp<std::uint64_t>(k, 1, n_);
            const double kd = static_cast<double>(k);
            if (kd - x <= s_ || v >= h_integral(kd + 0.5) - h(kd))
                return k;
        }
    }

private:
    double h(double x) const;
    double h_integral(double x) const;
    double h_integral_inverse(double x) const;

    std::uint64_t n_;
    double exponent_;
    double h_integral_x1_;
    double h_integral_n_;
    double s_;
};

class WorkloadGenerator {
public:
    explicit WorkloadGenerator(WorkloadSpec spec);
    IoEvent next();
    const WorkloadSpec& spec() const noexcept { return spec_; }

private:
    double uniform01();
    std::uint64_t below(std::uint64_t n);
    std::uint64_t draw_size();
    std::uint64_t draw_offset(DeviceId dev, std::uint64_t length);

    WorkloadSpec spec_;
    std::mt19937_64 rng_;
    std::vector<std::uint64_t> cursor_;  // per device, sequential model
    std::unique_ptr<ZipfSampler> zipf_;
    std::uint64_t zipf_items_ = 0;
    std::uint64_t zipf_unit_ = 0;
    std::uint64_t count_ = 0;
};

/// JSON form used by the CLI; see docs/workload-spec.md. Throws std::invalid_argument.
WorkloadSpec workload_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::ordered_json to_json(const WorkloadSpec& spec);

/// n events from a fresh generator; devices are named syn_<i>.
Trace generate(const WorkloadSpec& spec, std::uint64_t n);

}  // namespace vbcache
