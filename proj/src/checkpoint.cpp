#include "arclat/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace arclat {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'A', 'R', 'C', 'M'};
constexpr unsigned char kVersion = 1;

void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32_le(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32_le(out, bits);
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

ordered_json config_to_json(const Checkpoint& c) {
    ordered_json j;
    if (c.kind == "pca") {
        j["dim"] = c.pca_dim;
    } else {
        j["k"] = c.model_config.k;
        j["d"] = c.model_config.d;
        j["variational"] = c.model_config.variational;
        j["alpha"] = c.model_config.alpha;
        j["dropblock_rate"] = c.model_config.dropblock_rate;
        j["dropblock_size"] = c.model_config.dropblock_size;
    }
    return j;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    ARCLAT_CHECK(ckpt.kind == "ae" || ckpt.kind == "vae" || ckpt.kind == "pca",
                 "unknown checkpoint kind '" + ckpt.kind + "'");

    ordered_json meta;
    meta["kind"] = ckpt.kind;
    meta["config"] = config_to_json(ckpt);
    ordered_json arrays = ordered_json::array();
    for (const auto& a : ckpt.arrays) {
        ordered_json e;
        e["name"] = a.name;
        e["shape"] = a.shape;
        arrays.push_back(std::move(e));
    }
    meta["arrays"] = std::move(arrays);
    meta["training"] = {{"epoch", ckpt.epoch}, {"val_loss", ckpt.val_loss}};

    const std::string js = meta.dump();
    std::string out;
    out.append(kMagic, 4);
    out.push_back(static_cast<char>(kVersion));
    put_u32_le(out, static_cast<std::uint32_t>(js.size()));
    out += js;
    for (const auto& a : ckpt.arrays) {
        ARCLAT_CHECK(a.data.size() == Tensor::numel_of(a.shape),
                     "array '" + a.name + "' size does not match its shape");
        for (double v : a.data) put_f32_le(out, static_cast<float>(v));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    ARCLAT_CHECK(f.good(), "cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    ARCLAT_CHECK(f.good(), "short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    ARCLAT_CHECK(f.good(), "cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    ARCLAT_CHECK(bytes.size() >= 9, "checkpoint file too short");
    ARCLAT_CHECK(std::memcmp(bytes.data(), kMagic, 4) == 0, "bad checkpoint magic");
    ARCLAT_CHECK(static_cast<unsigned char>(bytes[4]) == kVersion,
                 "unsupported checkpoint version");

    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t jlen = get_u32_le(p + 5);
    ARCLAT_CHECK(bytes.size() >= 9 + static_cast<std::size_t>(jlen), "truncated metadata");
    ordered_json meta;
    try {
        meta = ordered_json::parse(bytes.substr(9, jlen));
    } catch (const std::exception& e) {
        throw Error(std::string("bad checkpoint metadata: ") + e.what());
    }

    Checkpoint c;
    c.kind = meta.at("kind").get<std::string>();
    const auto& cfg = meta.at("config");
    if (c.kind == "pca") {
        c.pca_dim = cfg.at("dim").get<std::size_t>();
    } else if (c.kind == "ae" || c.kind == "vae") {
        c.model_config.k = cfg.at("k").get<std::size_t>();
        c.model_config.d = cfg.at("d").get<std::size_t>();
        c.model_config.variational = cfg.at("variational").get<bool>();
        c.model_config.alpha = cfg.at("alpha").get<double>();
        c.model_config.dropblock_rate = cfg.at("dropblock_rate").get<double>();
        c.model_config.dropblock_size = cfg.at("dropblock_size").get<std::size_t>();
    } else {
        throw Error("unknown checkpoint kind '" + c.kind + "'");
    }
    c.epoch = meta.at("training").at("epoch").get<std::size_t>();
    c.val_loss = meta.at("training").at("val_loss").get<double>();

    std::size_t off = 9 + jlen;
    for (const auto& e : meta.at("arrays")) {
        CheckpointArray a;
        a.name = e.at("name").get<std::string>();
        a.shape = e.at("shape").get<std::vector<std::size_t>>();
        const std::size_t count = Tensor::numel_of(a.shape);
        ARCLAT_CHECK(bytes.size() >= off + 4 * count, "truncated weight payload");
        a.data.resize(count);
        for (std::size_t i = 0; i < count; ++i, off += 4) {
            const std::uint32_t bits = get_u32_le(p + off);
            float fv;
            std::memcpy(&fv, &bits, 4);
            a.data[i] = static_cast<double>(fv);
        }
        c.arrays.push_back(std::move(a));
    }
    ARCLAT_CHECK(off == bytes.size(), "trailing bytes after weight payload");
    return c;
}

Checkpoint snapshot_model(AutoencoderModel& model, std::size_t epoch, double val_loss) {
    Checkpoint c;
    c.kind = model.cfg.variational ? "vae" : "ae";
    c.model_config = model.cfg;
    c.epoch = epoch;
    c.val_loss = val_loss;
    for (const auto& t : model.named_tensors())
        c.arrays.push_back({t.name, t.value->shape, t.value->data});
    return c;
}

AutoencoderModel model_from_checkpoint(const Checkpoint& ckpt) {
    ARCLAT_CHECK(ckpt.kind == "ae" || ckpt.kind == "vae",
                 "checkpoint kind '" + ckpt.kind + "' is not a network");
    ARCLAT_CHECK(ckpt.model_config.variational == (ckpt.kind == "vae"),
                 "kind tag disagrees with the variational flag");
    AutoencoderModel model(ckpt.model_config);
    const auto tensors = model.named_tensors();
    ARCLAT_CHECK(tensors.size() == ckpt.arrays.size(),
                 "checkpoint holds " + std::to_string(ckpt.arrays.size()) + " arrays, expected " +
                     std::to_string(tensors.size()));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& a = ckpt.arrays[i];
        ARCLAT_CHECK(a.name == tensors[i].name,
                     "array " + std::to_string(i) + " is '" + a.name + "', expected '" +
                         tensors[i].name + "'");
        ARCLAT_CHECK(a.shape == tensors[i].value->shape,
                     "array '" + a.name + "' shape does not match the architecture");
        tensors[i].value->data = a.data;
    }
    return model;
}

Checkpoint snapshot_pca(const PcaModel& model) {
    Checkpoint c;
    c.kind = "pca";
    c.pca_dim = model.dim();
    c.arrays.push_back({"mean", {kArcSize}, model.mean});
    c.arrays.push_back({"components", {model.dim(), kArcSize}, model.components});
    c.arrays.push_back({"singular_values", {model.dim()}, model.singular_values});
    return c;
}

PcaModel pca_from_checkpoint(const Checkpoint& ckpt) {
    ARCLAT_CHECK(ckpt.kind == "pca", "checkpoint kind '" + ckpt.kind + "' is not a pca model");
    ARCLAT_CHECK(ckpt.arrays.size() == 3, "pca checkpoint must hold exactly three arrays");
    const auto& mean = ckpt.arrays[0];
    const auto& comp = ckpt.arrays[1];
    const auto& sing = ckpt.arrays[2];
    ARCLAT_CHECK(mean.name == "mean" && comp.name == "components" &&
                     sing.name == "singular_values",
                 "unexpected pca array names");
    ARCLAT_CHECK(mean.data.size() == kArcSize, "pca mean has wrong length");
    ARCLAT_CHECK(comp.data.size() == ckpt.pca_dim * kArcSize, "pca components have wrong size");
    ARCLAT_CHECK(sing.data.size() == ckpt.pca_dim, "pca singular values have wrong length");
    PcaModel m;
    m.mean = mean.data;
    m.components = comp.data;
    m.singular_values = sing.data;
    reorthonormalize(m);
    return m;
}

}  // namespace arclat
