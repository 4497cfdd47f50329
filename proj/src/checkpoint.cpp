#include "gd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gd {

namespace {

constexpr char kMagic[] = "GDCKPT1\n";

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void write_payload(std::ostream& out, const std::vector<Real>& data) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(Real)));
}

std::string read_line(std::istream& in, const char* what) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(std::string("checkpoint: missing ") + what);
    return line;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params) {
    out << kMagic;
    out << params.entries().size() << "\n";
    for (const auto& [name, t] : params.entries()) {
        out << name << "\n";
        const Shape& s = t.shape();
        for (size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
        out << "\n";
        write_payload(out, t.value());
    }
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    save_checkpoint(f, params);
}

ModelParams load_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic, expected GDCKPT1");
    const std::string count_line = read_line(in, "entry count");
    size_t count = 0;
    try {
        count = std::stoul(count_line);
    } catch (const std::exception&) {
        throw std::runtime_error("checkpoint: bad entry count line '" + count_line + "'");
    }

    ModelParams mp;
    for (size_t e = 0; e < count; ++e) {
        const std::string name = read_line(in, "entry name");
        const std::string shape_line = read_line(in, "shape line");
        Shape shape;
        std::istringstream ss(shape_line);
        int d;
        while (ss >> d) {
            if (d < 0) throw std::runtime_error("checkpoint: negative dim in entry " + name);
            shape.push_back(d);
        }
        const std::int64_t n = shape_numel(shape);
        std::vector<Real> data(n);
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(Real)));
        if (in.gcount() != static_cast<std::streamsize>(n * sizeof(Real)))
            throw std::runtime_error("checkpoint: truncated payload for entry " + name);
        mp.add(name, Tensor::from_data(std::move(shape), std::move(data), false));
    }
    return mp;
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    return load_checkpoint(f);
}

void load_into(std::istream& in, ModelParams& params) {
    ModelParams loaded = load_checkpoint(in);
    if (loaded.entries().size() != params.entries().size())
        throw std::runtime_error("checkpoint: entry count mismatch (" +
                                 std::to_string(loaded.entries().size()) + " in archive, " +
                                 std::to_string(params.entries().size()) + " expected)");
    for (auto& [name, t] : params.entries()) {
        const Tensor& src = loaded.at(name);
        if (src.shape() != t.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + name + ": archive " +
                                     shape_str(src.shape()) + " vs model " + shape_str(t.shape()));
        t.mutable_value() = src.value();
    }
}

void load_into(const std::string& path, ModelParams& params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    load_into(f, params);
}

}  // namespace gd
