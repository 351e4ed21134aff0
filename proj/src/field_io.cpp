#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "imitate/io.hpp"
#include "json.hpp"

namespace imitate::io {

void write_field(const std::string& path, const Tensor& field) {
    require(field.rank() == 3 && field.dim(2) == 2, "field must be {H,W,2}");
    const uint32_t H = static_cast<uint32_t>(field.dim(0));
    const uint32_t W = static_cast<uint32_t>(field.dim(1));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    unsigned char header[8];
    for (int i = 0; i < 4; ++i) header[i] = static_cast<unsigned char>((H >> (8 * i)) & 0xff);
    for (int i = 0; i < 4; ++i) header[4 + i] = static_cast<unsigned char>((W >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(header), 8);
    std::vector<float> buf(static_cast<size_t>(H) * W * 2);
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(field.data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));

    nlohmann::json meta = {{"height", H},
                           {"width", W},
                           {"components", {"row", "col"}},
                           {"layout", "hwc"},
                           {"dtype", "float32"}};
    atomic_write(path + ".field.json", meta.dump(2) + "\n");
}

Tensor read_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for read: " + path);
    unsigned char header[8];
    in.read(reinterpret_cast<char*>(header), 8);
    if (!in) throw std::runtime_error("truncated field file: " + path);
    uint32_t H = 0, W = 0;
    for (int i = 0; i < 4; ++i) H |= static_cast<uint32_t>(header[i]) << (8 * i);
    for (int i = 0; i < 4; ++i) W |= static_cast<uint32_t>(header[4 + i]) << (8 * i);
    std::vector<float> buf(static_cast<size_t>(H) * W * 2);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated field file: " + path);
    Tensor field({static_cast<int>(H), static_cast<int>(W), 2});
    for (size_t i = 0; i < field.numel(); ++i) field.data()[i] = buf[i];
    return field;
}

void atomic_write(const std::string& path, const std::string& contents) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for read: " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace imitate::io
