#include "vbcache/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "vbcache/block_size_config.hpp"

namespace vbcache {

SizeDistribution SizeDistribution::fixed(std::uint64_t size) {
    return {Kind::fixed, {size}, {}};
}

SizeDistribution SizeDistribution::uniform_set(std::vector<std::uint64_t> sizes) {
    return {Kind::uniform_set, std::move(sizes), {}};
}

SizeDistribution SizeDistribution::empirical(std::vector<std::uint64_t> sizes, std::vector<double> cdf) {
    return {Kind::empirical, std::move(sizes), std::move(cdf)};
}

SizeDistribution SizeDistribution::load_cdf(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open CDF table " + path.string());
    std::vector<std::uint64_t> sizes;
    std::vector<double> cdf;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("bad CDF row '" + line + "'");
        if (std::isalpha(static_cast<unsigned char>(line[0])) && sizes.empty() && line.rfind("size", 0) == 0)
            continue;  // header
        sizes.push_back(parse_byte_size(line.substr(0, comma)));
        cdf.push_back(std::stod(line.substr(comma + 1)));
    }
    auto d = empirical(std::move(sizes), std::move(cdf));
    return d;
}

std::vector<double> SizeDistribution::probabilities() const {
    std::vector<double> p(sizes.size());
    switch (kind) {
    case Kind::fixed: p.assign(1, 1.0); break;
    case Kind::uniform_set: std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(sizes.size())); break;
    case Kind::empirical:
        for (std::size_t i = 0; i < sizes.size(); ++i)
            p[i] = cdf[i] - (i == 0 ? 0.0 : cdf[i - 1]);
        break;
    }
    return p;
}

void WorkloadSpec::validate() const {
    auto bad = [](const std::string& what) { throw std::invalid_argument("workload: " + what); };
    if (devices == 0)
        bad("device count must be >= 1");
    if (offset_alignment == 0 || address_space < offset_alignment)
        bad("address space must hold at least one aligned offset");
    if (sizes.sizes.empty())
        bad("no request sizes");
    for (auto s : sizes.sizes)
        if (s == 0 || s > address_space)
            bad("request size out of range");
    if (sizes.kind == SizeDistribution::Kind::fixed && sizes.sizes.size() != 1)
        bad("fixed size distribution takes exactly one size");
    if (sizes.kind == SizeDistribution::Kind::empirical) {
        if (sizes.cdf.size() != sizes.sizes.size())
            bad("CDF table length differs from size list");
        double prev = 0;
        for (auto c : sizes.cdf) {
            if (!(c >= prev) || c > 1.0 + 1e-9)
                bad("CDF must be non-decreasing within [0,1]");
            prev = c;
        }
        if (std::abs(prev - 1.0) > 1e-9)
            bad("CDF must end at 1");
    }
    if (!(read_fraction >= 0 && read_fraction <= 1))
        bad("read fraction must be within [0,1]");
    if (locality.kind == LocalityModel::Kind::zipfian && !(locality.zipf_exponent > 0))
        bad("zipf exponent must be > 0");
    if (locality.kind == LocalityModel::Kind::sequential &&
        !(locality.sequential_fraction >= 0 && locality.sequential_fraction <= 1))
        bad("sequential fraction must be within [0,1]");
}

// Rejection-inversion (Hörmann & Derflinger), valid for any exponent > 0.
namespace {
double log1p_over_x(double x) { return std::abs(x) > 1e-8 ? std::log1p(x) / x : 1.0 - x * (0.5 - x / 3.0); }
double expm1_over_x(double x) { return std::abs(x) > 1e-8 ? std::expm1(x) / x : 1.0 + x * (0.5 + x / 6.0); }
}  // namespace

ZipfSampler::ZipfSampler(std::uint64_t n, double exponent) : n_(n), exponent_(exponent) {
    if (n == 0 || !(exponent > 0))
        throw std::invalid_argument("zipf sampler needs n >= 1 and exponent > 0");
    h_integral_x1_ = h_integral(1.5) - 1.0;
    h_integral_n_ = h_integral(static_cast<double>(n) + 0.5);
    s_ = 2.0 - h_integral_inverse(h_integral(2.5) - h(2.0));
}

double ZipfSampler::h(double x) const { return std::exp(-exponent_ * std::log(x)); }

double ZipfSampler::h_integral(double x) const {
    const double lx = std::log(x);
    return expm1_over_x((1.0 - exponent_) * lx) * lx;
}

double ZipfSampler::h_integral_inverse(double x) const {
    double t = x * (1.0 - exponent_);
    if (t < -1.0)
        t = -1.0;
    return std::exp(log1p_over_x(t) * x);
}

WorkloadGenerator::WorkloadGenerator(WorkloadSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {
    spec_.validate();
    cursor_.assign(spec_.devices, 0);
    if (spec_.locality.kind == LocalityModel::Kind::zipfian) {
        zipf_unit_ = spec_.locality.zipf_granularity ? spec_.locality.zipf_granularity : MiB;
        zipf_unit_ = std::max(zipf_unit_, spec_.offset_alignment) / spec_.offset_alignment * spec_.offset_alignment;
        zipf_items_ = std::max<std::uint64_t>(1, spec_.address_space / zipf_unit_);
        zipf_ = std::make_unique<ZipfSampler>(zipf_items_, spec_.locality.zipf_exponent);
    }
}

double WorkloadGenerator::uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

std::uint64_t WorkloadGenerator::below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng_()) * n) >> 64);
}

std::uint64_t WorkloadGenerator::draw_size() {
    const auto& d = spec_.sizes;
    switch (d.kind) {
    case SizeDistribution::Kind::fixed: return d.sizes.front();
    case SizeDistribution::Kind::uniform_set: return d.sizes[below(d.sizes.size())];
    case SizeDistribution::Kind::empirical: {
        const double u = uniform01();
        auto it = std::upper_bound(d.cdf.begin(), d.cdf.end(), u);
        if (it == d.cdf.end())
            --it;
        return d.sizes[static_cast<std::size_t>(it - d.cdf.begin())];
    }
    }
    return d.sizes.front();
}

std::uint64_t WorkloadGenerator::draw_offset(DeviceId dev, std::uint64_t length) {
    const std::uint64_t align_to = spec_.offset_alignment;
    const std::uint64_t slots = std::max<std::uint64_t>(1, (spec_.address_space - std::min(length, spec_.address_space)) / align_to + 1);
    std::uint64_t off = 0;
    switch (spec_.locality.kind) {
    case LocalityModel::Kind::uniform:
        off = below(slots) * align_to;
        break;
    case LocalityModel::Kind::sequential:
        if (uniform01() < spec_.locality.sequential_fraction)
            off = cursor_[dev];
        else
            off = below(slots) * align_to;
        break;
    case LocalityModel::Kind::zipfian: {
        const std::uint64_t rank = (*zipf_)([this] { return uniform01(); }) - 1;
        // Scatter hot ranks across the address space.
        const std::uint64_t item = (rank * 0x9E3779B97F4A7C15ull + spec_.seed) % zipf_items_;
        off = item * zipf_unit_ + below(zipf_unit_ / align_to) * align_to;
        break;
    }
    }
    if (off + length > spec_.address_space)
        off = 0;
    cursor_[dev] = (off + length + align_to - 1) / align_to * align_to;
    return off;
}

IoEvent WorkloadGenerator::next() {
    IoEvent e;
    e.device = spec_.devices == 1 ? 0 : static_cast<DeviceId>(below(spec_.devices));
    e.op = uniform01() < spec_.read_fraction ? OpKind::read : OpKind::write;
    e.length = draw_size();
    e.offset = draw_offset(e.device, e.length);
    e.timestamp_ns = ++count_ * 1000;
    return e;
}

Trace generate(const WorkloadSpec& spec, std::uint64_t n) {
    Trace trace;
    for (std::uint32_t d = 0; d < spec.devices; ++d)
        trace.device_id("syn_" + std::to_string(d));
    WorkloadGenerator gen(spec);
    trace.events.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i)
        trace.events.push_back(gen.next());
    return trace;
}

namespace {

std::uint64_t bytes_of(const nlohmann::json& v) {
    return v.is_string() ? parse_byte_size(v.get<std::string>()) : v.get<std::uint64_t>();
}

std::vector<std::uint64_t> byte_list(const nlohmann::json& v) {
    std::vector<std::uint64_t> out;
    for (const auto& e : v)
        out.push_back(bytes_of(e));
    return out;
}

}  // namespace

WorkloadSpec workload_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    WorkloadSpec s;
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto& k = it.key();
            const auto& v = it.value();
            if (k == "seed") {
                s.seed = v.get<std::uint64_t>();
            } else if (k == "devices") {
                s.devices = v.get<std::uint32_t>();
            } else if (k == "address_space") {
                s.address_space = bytes_of(v);
            } else if (k == "offset_alignment") {
                s.offset_alignment = bytes_of(v);
            } else if (k == "read_fraction") {
                s.read_fraction = v.get<double>();
            } else if (k == "sizes") {
                const auto kind = v.at("kind").get<std::string>();
                if (kind == "fixed") {
                    s.sizes = SizeDistribution::fixed(bytes_of(v.at("size")));
                } else if (kind == "uniform") {
                    s.sizes = SizeDistribution::uniform_set(byte_list(v.at("sizes")));
                } else if (kind == "empirical") {
                    if (v.contains("cdf_file")) {
                        std::filesystem::path p = v.at("cdf_file").get<std::string>();
                        if (p.is_relative() && !base_dir.empty())
                            p = base_dir / p;
                        s.sizes = SizeDistribution::load_cdf(p);
                    } else {
                        s.sizes = SizeDistribution::empirical(byte_list(v.at("sizes")),
                                                              v.at("cdf").get<std::vector<double>>());
                    }
                } else {
                    throw std::invalid_argument("unknown size distribution '" + kind + "'");
                }
            } else if (k == "locality") {
                const auto kind = v.at("kind").get<std::string>();
                if (kind == "uniform")
                    s.locality.kind = LocalityModel::Kind::uniform;
                else if (kind == "zipfian")
                    s.locality.kind = LocalityModel::Kind::zipfian;
                else if (kind == "sequential")
                    s.locality.kind = LocalityModel::Kind::sequential;
                else
                    throw std::invalid_argument("unknown locality model '" + kind + "'");
                if (v.contains("exponent"))
                    s.locality.zipf_exponent = v["exponent"].get<double>();
                if (v.contains("granularity"))
                    s.locality.zipf_granularity = bytes_of(v["granularity"]);
                if (v.contains("sequential_fraction"))
                    s.locality.sequential_fraction = v["sequential_fraction"].get<double>();
            } else {
                throw std::invalid_argument("unknown workload key '" + k + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("workload spec: ") + e.what());
    }
    s.validate();
    return s;
}

nlohmann::ordered_json to_json(const WorkloadSpec& s) {
    nlohmann::ordered_json j;
    j["seed"] = s.seed;
    j["devices"] = s.devices;
    j["address_space"] = s.address_space;
    j["offset_alignment"] = s.offset_alignment;
    j["read_fraction"] = s.read_fraction;
    nlohmann::ordered_json sizes;
    switch (s.sizes.kind) {
    case SizeDistribution::Kind::fixed:
        sizes["kind"] = "fixed";
        sizes["size"] = s.sizes.sizes.front();
        break;
    case SizeDistribution::Kind::uniform_set:
        sizes["kind"] = "uniform";
        sizes["sizes"] = s.sizes.sizes;
        break;
    case SizeDistribution::Kind::empirical:
        sizes["kind"] = "empirical";
        sizes["sizes"] = s.sizes.sizes;
        sizes["cdf"] = s.sizes.cdf;
        break;
    }
    j["sizes"] = sizes;
    nlohmann::ordered_json loc;
    switch (s.locality.kind) {
    case LocalityModel::Kind::uniform: loc["kind"] = "uniform"; break;
    case LocalityModel::Kind::zipfian:
        loc["kind"] = "zipfian";
        loc["exponent"] = s.locality.zipf_exponent;
        loc["granularity"] = s.locality.zipf_granularity;
        break;
    case LocalityModel::Kind::sequential:
        loc["kind"] = "sequential";
        loc["sequential_fraction"] = s.locality.sequential_fraction;
        break;
    }
    j["locality"] = loc;
    return j;
}

}  // namespace vbcache
