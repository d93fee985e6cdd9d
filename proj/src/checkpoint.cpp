#include "rrtn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace rrtn {

namespace {

constexpr char kMagic[] = "RRTN-CKPT";
constexpr std::uint32_t kVersion = 1;

void write_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    write_u64le(os, bits);
}

std::uint32_t read_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double read_f64le(std::istream& is) {
    const std::uint64_t bits = read_u64le(is);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["encoder_kind"] = cfg.encoder_kind == EncoderKind::mlp ? "mlp" : "tiny_cnn";
    j["encoder_dims"] = cfg.encoder_dims;
    j["rep_dim"] = cfg.rep_dim;
    j["emb_dim"] = cfg.emb_dim;
    j["n_outputs"] = cfg.n_outputs;
    j["head_sigmoid"] = cfg.head_sigmoid;
    j["input_t"] = cfg.input_t;
    j["input_f"] = cfg.input_f;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig cfg;
    const std::string kind = j.at("encoder_kind").get<std::string>();
    if (kind == "mlp") cfg.encoder_kind = EncoderKind::mlp;
    else if (kind == "tiny_cnn") cfg.encoder_kind = EncoderKind::tiny_cnn;
    else throw std::runtime_error("checkpoint: unknown encoder kind '" + kind + "'");
    cfg.encoder_dims = j.at("encoder_dims").get<std::vector<std::size_t>>();
    cfg.rep_dim = j.at("rep_dim").get<std::size_t>();
    cfg.emb_dim = j.at("emb_dim").get<std::size_t>();
    cfg.n_outputs = j.at("n_outputs").get<std::size_t>();
    cfg.head_sigmoid = j.at("head_sigmoid").get<bool>();
    cfg.input_t = j.at("input_t").get<std::size_t>();
    cfg.input_f = j.at("input_f").get<std::size_t>();
    return cfg;
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint " + path + ": cannot open for writing");

    os.write(kMagic, sizeof(kMagic) - 1);
    write_u32le(os, kVersion);
    const std::string cfg_json = model_config_to_json(cfg);
    write_u64le(os, cfg_json.size());
    os.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

    write_u32le(os, static_cast<std::uint32_t>(params.entries.size()));
    for (const auto& e : params.entries) {
        write_u32le(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_u32le(os, static_cast<std::uint32_t>(e.tensor.rank()));
        for (std::size_t d : e.tensor.shape()) write_u64le(os, d);
        const Array& a = e.tensor.data();
        for (Eigen::Index i = 0; i < a.size(); ++i) write_f64le(os, a[i]);
    }
    if (!os) throw std::runtime_error("checkpoint " + path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint " + path + ": cannot open");

    char magic[sizeof(kMagic) - 1];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint " + path + ": bad magic");
    const std::uint32_t version = read_u32le(is);
    if (version != kVersion)
        throw std::runtime_error("checkpoint " + path + ": unsupported version " +
                                 std::to_string(version));

    const std::uint64_t cfg_len = read_u64le(is);
    std::string cfg_json(cfg_len, '\0');
    is.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
    if (!is) throw std::runtime_error("checkpoint " + path + ": truncated config echo");

    Checkpoint ckpt;
    ckpt.config = model_config_from_json(cfg_json);

    const std::uint32_t count = read_u32le(is);
    for (std::uint32_t p = 0; p < count; ++p) {
        const std::uint32_t name_len = read_u32le(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const std::uint32_t rank = read_u32le(is);
        Shape shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = read_u64le(is);
        Tensor t(shape, 0.0);
        Array& a = t.mut();
        for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = read_f64le(is);
        if (!is)
            throw std::runtime_error("checkpoint " + path + ": truncated block '" + name + "'");
        t.set_requires_grad(true);
        ckpt.params.entries.push_back({std::move(name), std::move(t)});
    }
    return ckpt;
}

}  // namespace rrtn
