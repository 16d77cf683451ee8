#include "sdic/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sdic/errors.hpp"

namespace sdic::io {

namespace {

static_assert(std::endian::native == std::endian::little, "NTF writer assumes a little-endian host");

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint32_t get_u32(std::string_view bytes, std::size_t at) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    return v;
}

std::string file_name_for(const std::string& name) {
    std::string f = name;
    for (char& c : f) {
        if (c == '/' || c == '\\' || c == '\t') c = '_';
    }
    return f + ".ntf";
}

}  // namespace

std::string encode_ntf(const torch::Tensor& t) {
    uint8_t dtype = 0;
    if (t.scalar_type() == torch::kFloat32) {
        dtype = 1;
    } else if (t.scalar_type() == torch::kFloat64) {
        dtype = 2;
    } else {
        throw IoError("NTF supports only 32- and 64-bit floats");
    }
    if (t.dim() > 255) throw IoError("NTF rank exceeds 255");
    const auto c = t.detach().to(torch::kCPU).contiguous();

    std::string out(kNtfMagic, 4);
    out.push_back(static_cast<char>(dtype));
    out.push_back(static_cast<char>(c.dim()));
    out.push_back('\0');
    out.push_back('\0');
    for (int64_t s : c.sizes()) {
        if (s < 0 || s > static_cast<int64_t>(UINT32_MAX)) throw IoError("NTF dimension out of range");
        put_u32(out, static_cast<uint32_t>(s));
    }
    const auto nbytes = static_cast<std::size_t>(c.numel()) * c.element_size();
    out.append(static_cast<const char*>(c.data_ptr()), nbytes);
    return out;
}

torch::Tensor decode_ntf(std::string_view bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kNtfMagic, 4) != 0) throw IoError("not an NTF tensor (bad magic)");
    const auto dtype = static_cast<uint8_t>(bytes[4]);
    const auto rank = static_cast<uint8_t>(bytes[5]);
    if (bytes[6] != '\0' || bytes[7] != '\0') throw IoError("NTF padding bytes must be zero");
    torch::ScalarType st;
    std::size_t elem = 0;
    if (dtype == 1) {
        st = torch::kFloat32;
        elem = 4;
    } else if (dtype == 2) {
        st = torch::kFloat64;
        elem = 8;
    } else {
        throw IoError("NTF dtype byte " + std::to_string(dtype) + " is not 1 or 2");
    }
    const std::size_t header = 8 + 4 * static_cast<std::size_t>(rank);
    if (bytes.size() < header) throw IoError("NTF header truncated");
    std::vector<int64_t> dims(rank);
    std::size_t count = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        dims[i] = get_u32(bytes, 8 + 4 * i);
        count *= static_cast<std::size_t>(dims[i]);
    }
    if (bytes.size() != header + count * elem) throw IoError("NTF payload size does not match its dims");
    auto t = torch::empty(dims, torch::TensorOptions().dtype(st));
    std::memcpy(t.data_ptr(), bytes.data() + header, count * elem);
    return t;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("short write to " + path.string());
}

void write_ntf(const std::filesystem::path& path, const torch::Tensor& t) { write_text(path, encode_ntf(t)); }

torch::Tensor read_ntf(const std::filesystem::path& path) { return decode_ntf(read_text(path)); }

void write_tensor_dir(const std::filesystem::path& dir, const NamedTensors& tensors) {
    std::filesystem::create_directories(dir);
    std::string manifest;
    for (const auto& [name, t] : tensors) {
        const auto file = file_name_for(name);
        write_ntf(dir / file, t);
        manifest += name + "\t" + file + "\t" + shape_string(t.sizes()) + "\n";
    }
    write_text(dir / "manifest.tsv", manifest);
}

NamedTensors read_tensor_dir(const std::filesystem::path& dir) {
    std::istringstream in(read_text(dir / "manifest.tsv"));
    NamedTensors out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto a = line.find('\t');
        const auto b = line.find('\t', a == std::string::npos ? a : a + 1);
        if (a == std::string::npos || b == std::string::npos) throw IoError("malformed manifest line: " + line);
        const auto name = line.substr(0, a);
        const auto file = line.substr(a + 1, b - a - 1);
        auto t = read_ntf(dir / file);
        if (shape_string(t.sizes()) != line.substr(b + 1)) throw IoError("manifest shape mismatch for " + name);
        out.emplace_back(name, std::move(t));
    }
    return out;
}

}  // namespace sdic::io
