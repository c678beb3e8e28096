#include "pcmae/checkpoint.hpp"

#include "binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>
#include <map>

namespace pcmae {

namespace {

constexpr std::string_view kMagic = "PCME";

void put_record(std::string& out, const std::string& name, const ad::Shape& shape, std::span<const float> data) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    detail::put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) detail::put_u64(out, d);
    for (float v : data) detail::put_f32(out, v);
}

struct Record {
    ad::Shape shape;
    std::vector<float> data;
};

}  // namespace

std::uint32_t crc32(std::string_view bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
    std::size_t left = bytes.size();
    while (left > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
        crc = ::crc32(crc, p, chunk);
        p += chunk;
        left -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<optim::NamedParam> named_parameters(model::ModelParams<float>& params) {
    std::vector<optim::NamedParam> out;
    params.for_each([&](const std::string& name, ad::Tensor<float>& t) {
        out.push_back({name, t, !model::is_decay_exempt(name)});
    });
    return out;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    auto doc = ckpt.config.to_document();
    doc.set("state", "step", ckpt.step);
    doc.set("state", "seed", ckpt.config.seed);
    doc.set("state", "adam_t", ckpt.optimizer.t);
    const std::string text = doc.to_text();

    std::string out;
    out.append(kMagic);
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.append(text);

    std::vector<std::pair<std::string, ad::Tensor<float>>> params;
    ckpt.params.for_each([&](const std::string& name, const ad::Tensor<float>& t) { params.emplace_back(name, t); });
    for (const auto& [name, t] : params) put_record(out, "param/" + name, t.shape(), t.values());
    if (!ckpt.optimizer.m.empty()) {
        if (ckpt.optimizer.m.size() != params.size() || ckpt.optimizer.v.size() != params.size())
            throw CheckpointError("checkpoint: optimizer state does not match the parameter list");
        for (std::size_t i = 0; i < params.size(); ++i) {
            put_record(out, "adam_m/" + params[i].first, params[i].second.shape(), ckpt.optimizer.m[i]);
            put_record(out, "adam_v/" + params[i].first, params[i].second.shape(), ckpt.optimizer.v[i]);
        }
    }
    detail::put_u32(out, crc32(out));
    return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    if (bytes.size() < 16) throw CheckpointError("checkpoint: truncated file (" + std::to_string(bytes.size()) + " bytes)");
    if (bytes.substr(0, 4) != kMagic) throw CheckpointError("checkpoint: bad magic (not a PCME file)");
    detail::Reader head(bytes.substr(4, 4));
    const std::uint32_t version = head.u32("version");
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    const auto body = bytes.substr(0, bytes.size() - 4);
    const std::uint32_t stored = detail::Reader(bytes.substr(bytes.size() - 4)).u32("checksum");
    const std::uint32_t actual = crc32(body);
    if (stored != actual)
        throw CheckpointError("checkpoint: checksum mismatch (stored " + std::to_string(stored) + ", computed " +
                              std::to_string(actual) + "); file is corrupt or truncated");

    std::map<std::string, Record> records;
    std::string config_text;
    try {
        detail::Reader r(body);
        r.take(8, "header");
        const std::uint32_t len = r.u32("config length");
        config_text = std::string(r.take(len, "config text"));
        while (r.remaining() > 0) {
            const std::uint32_t name_len = r.u32("record name length");
            std::string name(r.take(name_len, "record name"));
            const std::uint32_t rank = r.u32("record rank");
            Record rec;
            std::size_t count = 1;
            for (std::uint32_t d = 0; d < rank; ++d) {
                rec.shape.push_back(static_cast<std::size_t>(r.u64("record dims")));
                count *= rec.shape.back();
            }
            if (count > r.remaining() / 4) throw std::out_of_range("record '" + name + "' exceeds file size");
            rec.data.resize(count);
            for (auto& v : rec.data) v = r.f32("record data");
            if (!records.emplace(name, std::move(rec)).second)
                throw CheckpointError("checkpoint: duplicate record '" + name + "'");
        }
    } catch (const std::out_of_range& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    }

    Checkpoint ck;
    ini::Document doc;
    try {
        doc = ini::Document::parse(config_text);
        ck.config = TrainConfig::from_document(doc, TrainConfig::paper());
        ck.step = doc.get_uint("state", "step", 0);
        ck.optimizer.t = doc.get_uint("state", "adam_t", 0);
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("checkpoint: embedded config invalid: ") + e.what());
    }
    ck.params = model::ModelParams<float>::init(ck.config.model, ck.config.seed);
    std::size_t used = 0;
    bool has_moments = false;
    ck.params.for_each([&](const std::string& name, ad::Tensor<float>& t) {
        const auto it = records.find("param/" + name);
        if (it == records.end()) throw CheckpointError("checkpoint: missing parameter '" + name + "'");
        if (it->second.shape != t.shape())
            throw CheckpointError("checkpoint: parameter '" + name + "' has shape " + ad::to_string(it->second.shape) +
                                  ", config implies " + ad::to_string(t.shape()));
        std::copy(it->second.data.begin(), it->second.data.end(), t.values().begin());
        ++used;
        const auto m = records.find("adam_m/" + name), v = records.find("adam_v/" + name);
        if (m != records.end() && v != records.end()) {
            if (m->second.shape != t.shape() || v->second.shape != t.shape())
                throw CheckpointError("checkpoint: optimizer moment shape mismatch for '" + name + "'");
            ck.optimizer.m.push_back(m->second.data);
            ck.optimizer.v.push_back(v->second.data);
            used += 2;
            has_moments = true;
        } else if (has_moments || m != records.end() || v != records.end()) {
            throw CheckpointError("checkpoint: incomplete optimizer moments for '" + name + "'");
        }
    });
    if (has_moments && ck.optimizer.m.size() != named_parameters(ck.params).size())
        throw CheckpointError("checkpoint: optimizer moments missing for some parameters");
    if (used != records.size()) throw CheckpointError("checkpoint: unexpected extra records");
    return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("checkpoint: cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw CheckpointError("checkpoint: write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError("checkpoint: cannot move into '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open '" + path.string() + "'");
    const std::string bytes(std::istreambuf_iterator<char>(in), {});
    try {
        return parse_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
}

}  // namespace pcmae
