#include "rrtn/datagen.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rrtn/rng.hpp"

namespace rrtn {

namespace {

double quantize_f32(double v) {
    return static_cast<double>(static_cast<float>(v));
}

// Smooth positive temporal envelope in [0.6, 1.0].
double envelope(std::size_t t, std::size_t T) {
    return 0.6 + 0.4 * std::sin(M_PI * (static_cast<double>(t) + 0.5) / static_cast<double>(T));
}

void write_f32le(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                          static_cast<unsigned char>((bits >> 8) & 0xff),
                          static_cast<unsigned char>((bits >> 16) & 0xff),
                          static_cast<unsigned char>((bits >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                         (static_cast<std::uint32_t>(b[2]) << 16) |
                         (static_cast<std::uint32_t>(b[3]) << 24);
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

[[noreturn]] void format_error(const std::string& path, std::streamoff offset, const std::string& what) {
    throw std::runtime_error("feature file " + path + ": " + what + " (byte offset " +
                             std::to_string(offset) + ")");
}

}  // namespace

std::pair<std::size_t, std::size_t> band_range(std::size_t k, std::size_t K, std::size_t F) {
    return {k * F / K, (k + 1) * F / K};
}

Dataset gen_synth(const SynthConfig& cfg) {
    if (cfg.n_samples == 0 || cfg.T == 0 || cfg.F == 0 || cfg.K == 0)
        throw std::invalid_argument("gen_synth: all extents must be positive");
    if (cfg.K > cfg.F)
        throw std::invalid_argument("gen_synth: K must be <= F (each target owns a band)");

    RngEngine rng(cfg.seed);
    Dataset data;
    data.features.reserve(cfg.n_samples);
    data.targets.resize(static_cast<Eigen::Index>(cfg.n_samples), static_cast<Eigen::Index>(cfg.K));

    for (std::size_t s = 0; s < cfg.n_samples; ++s) {
        Eigen::VectorXd u(static_cast<Eigen::Index>(cfg.K));
        for (std::size_t k = 0; k < cfg.K; ++k)
            u[static_cast<Eigen::Index>(k)] = quantize_f32(uniform01(rng));

        Tensor sample(Shape{1, cfg.T, cfg.F}, 0.0);
        Array& x = sample.mut();
        for (std::size_t t = 0; t < cfg.T; ++t) {
            const double env = envelope(t, cfg.T);
            for (std::size_t f = 0; f < cfg.F; ++f) {
                double v = 0.0;
                for (std::size_t k = 0; k < cfg.K; ++k) {
                    const auto [lo, hi] = band_range(k, cfg.K, cfg.F);
                    if (f >= lo && f < hi) v += u[static_cast<Eigen::Index>(k)] * env;
                }
                if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * normal(rng);
                x[static_cast<Eigen::Index>(t * cfg.F + f)] = quantize_f32(v);
            }
        }
        data.features.push_back(std::move(sample));
        data.targets.row(static_cast<Eigen::Index>(s)) = u.transpose();
    }
    data.n_train = cfg.n_samples * 4 / 5;
    return data;
}

Tensor crop_or_pad(const Tensor& sample, std::size_t target_t) {
    if (sample.rank() != 3 || sample.dim(0) != 1)
        throw std::invalid_argument("crop_or_pad: expected [1xTxF], got " + shape_str(sample.shape()));
    const std::size_t t_in = sample.dim(1);
    const std::size_t f = sample.dim(2);
    if (target_t == 0 || target_t == t_in) return sample;

    Tensor out(Shape{1, target_t, f}, 0.0);
    Array& dst = out.mut();
    const std::size_t keep = std::min(t_in, target_t);
    for (std::size_t t = 0; t < keep; ++t)
        for (std::size_t j = 0; j < f; ++j)
            dst[static_cast<Eigen::Index>(t * f + j)] =
                sample.data()[static_cast<Eigen::Index>(t * f + j)];
    return out;
}

void save_features(const std::string& path, const Dataset& data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("feature file " + path + ": cannot open for writing");

    const std::size_t n = data.size();
    const std::size_t t = data.frames();
    const std::size_t f = data.bins();
    const auto k = static_cast<std::size_t>(data.targets.cols());
    os << "RRTN-FEAT v1 " << n << " " << t << " " << f << " " << k << "\n";

    for (std::size_t s = 0; s < n; ++s) {
        const Array& x = data.features[s].data();
        for (Eigen::Index i = 0; i < x.size(); ++i)
            write_f32le(os, static_cast<float>(x[i]));
        for (std::size_t j = 0; j < k; ++j)
            write_f32le(os, static_cast<float>(data.targets(static_cast<Eigen::Index>(s),
                                                            static_cast<Eigen::Index>(j))));
    }
    if (!os) throw std::runtime_error("feature file " + path + ": write failed");
}

Dataset load_features(const std::string& path, std::size_t target_t) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("feature file " + path + ": cannot open");

    std::string header;
    if (!std::getline(is, header)) format_error(path, 0, "missing header line");
    std::istringstream hs(header);
    std::string magic, version;
    std::size_t n = 0, t = 0, f = 0, k = 0;
    hs >> magic >> version >> n >> t >> f >> k;
    if (magic != "RRTN-FEAT") format_error(path, 0, "bad magic '" + magic + "'");
    if (version != "v1") format_error(path, 0, "unsupported version '" + version + "'");
    if (hs.fail() || n == 0 || t == 0 || f == 0 || k == 0)
        format_error(path, 0, "bad header dimensions");

    Dataset data;
    data.features.reserve(n);
    data.targets.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));

    for (std::size_t s = 0; s < n; ++s) {
        Tensor sample(Shape{1, t, f}, 0.0);
        Array& x = sample.mut();
        for (std::size_t i = 0; i < t * f; ++i) {
            const std::streamoff off = is.tellg();
            const float v = read_f32le(is);
            if (!is) format_error(path, off, "truncated features in record " + std::to_string(s));
            x[static_cast<Eigen::Index>(i)] = static_cast<double>(v);
        }
        for (std::size_t j = 0; j < k; ++j) {
            const std::streamoff off = is.tellg();
            const float v = read_f32le(is);
            if (!is) format_error(path, off, "truncated targets in record " + std::to_string(s));
            data.targets(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) =
                static_cast<double>(v);
        }
        data.features.push_back(crop_or_pad(sample, target_t));
    }
    const std::streamoff off = is.tellg();
    char extra;
    if (is.read(&extra, 1)) format_error(path, off, "trailing bytes after last record");

    data.n_train = n * 4 / 5;
    return data;
}

}  // namespace rrtn
