#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "phaseforge/model.hpp"

namespace phaseforge {
namespace {

constexpr char kMagic[8] = {'P', 'H', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void text(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes.insert(bytes.end(), s.begin(), s.end());
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint32_t u32() {
        need(4, "integer");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string text() {
        const std::uint32_t n = u32();
        need(n, "string");
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n, "header");
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (data_.size() - pos_ < n) {
            throw std::runtime_error("checkpoint: truncated while reading " + std::string(what) + " at byte " +
                                     std::to_string(pos_));
        }
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model<float>& model) {
    Writer out;
    out.bytes.insert(out.bytes.end(), std::begin(kMagic), std::end(kMagic));
    out.u32(kFormatVersion);
    out.text(model.architecture().name);
    out.text(model.architecture().describe());
    out.u32(static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& p : model.parameters()) {
        out.text(p.name);
        out.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (std::size_t d : p.value.shape()) out.u32(static_cast<std::uint32_t>(d));
        for (float v : p.value.data()) out.f32(v);
    }
    return std::move(out.bytes);
}

Model<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    const auto magic = in.raw(sizeof(kMagic));
    if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw std::runtime_error("checkpoint: bad magic");
    const std::uint32_t version = in.u32();
    if (version != kFormatVersion) {
        throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
    }
    const std::string name = in.text();
    Architecture arch = Architecture::parse(in.text());
    arch.name = name;
    const std::uint32_t count = in.u32();
    std::vector<Parameter<float>> params;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string pname = in.text();
        const std::uint32_t rank = in.u32();
        if (rank > 8) throw std::runtime_error("checkpoint: implausible rank " + std::to_string(rank));
        Shape shape(rank);
        for (auto& d : shape) d = in.u32();
        std::vector<float> values(numel(shape));
        for (auto& v : values) v = in.f32();
        params.push_back({std::move(pname), Tensor<float>(std::move(shape), std::move(values), true)});
    }
    if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes");
    return Model<float>::from_parameters(std::move(arch), std::move(params));
}

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace phaseforge
