#include "revdeq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "revdeq/errors.hpp"

namespace revdeq {

namespace {

constexpr char kMagic[8] = {'R', 'D', 'E', 'Q', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

struct Reader {
    const char* p;
    const char* end;
    explicit Reader(const std::string& s) : p(s.data()), end(s.data() + s.size()) {}

    template <typename T>
    T get() {
        if (end - p < static_cast<std::ptrdiff_t>(sizeof(T)))
            throw io_error("checkpoint truncated");
        T v;
        std::memcpy(&v, p, sizeof(T));
        p += sizeof(T);
        return v;
    }
    std::string get_bytes(std::size_t n) {
        if (end - p < static_cast<std::ptrdiff_t>(n))
            throw io_error("checkpoint truncated");
        std::string s(p, n);
        p += n;
        return s;
    }
};

}  // namespace

void Checkpoint::add(const std::string& name, Tensor t) {
    if (find(name)) throw io_error("duplicate checkpoint record: " + name);
    records_.emplace_back(name, std::move(t));
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : records_)
        if (n == name) return &t;
    return nullptr;
}

const Tensor& Checkpoint::get(const std::string& name) const {
    const Tensor* t = find(name);
    if (!t) throw io_error("checkpoint record not found: " + name);
    return *t;
}

void Checkpoint::add_scalar(const std::string& name, double v) {
    add(name, Tensor::scalar(v));
}

void Checkpoint::add_u64(const std::string& name, std::uint64_t v) {
    add_scalar(name, std::bit_cast<double>(v));
}

double Checkpoint::get_scalar(const std::string& name) const {
    const Tensor& t = get(name);
    if (t.size() != 1) throw io_error("record " + name + " is not a scalar");
    return t[0];
}

std::uint64_t Checkpoint::get_u64(const std::string& name) const {
    return std::bit_cast<std::uint64_t>(get_scalar(name));
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, records_.size());
    for (const auto& [name, t] : records_) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        put<std::uint8_t>(out, t.precision() == Precision::single ? 0 : 1);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
        for (double v : t.data()) put<double>(out, v);
    }

    namespace fs = std::filesystem;
    fs::path dir = path.parent_path();
    if (!dir.empty()) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw io_error("cannot open " + tmp.string() + " for writing");
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw io_error("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw io_error("rename to " + path.string() + " failed: " + ec.message());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r(bytes);
    std::string magic = r.get_bytes(sizeof(kMagic));
    if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
        throw io_error(path.string() + " is not a checkpoint file");
    std::uint32_t version = r.get<std::uint32_t>();
    if (version != kVersion)
        throw io_error("unsupported checkpoint version " + std::to_string(version));
    std::uint64_t count = r.get<std::uint64_t>();

    Checkpoint ck;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t name_len = r.get<std::uint32_t>();
        std::string name = r.get_bytes(name_len);
        std::uint8_t prec = r.get<std::uint8_t>();
        if (prec > 1) throw io_error("bad precision tag in record " + name);
        std::uint32_t rank = r.get<std::uint32_t>();
        std::vector<std::size_t> shape;
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint64_t dim = r.get<std::uint64_t>();
            shape.push_back(static_cast<std::size_t>(dim));
            n *= static_cast<std::size_t>(dim);
        }
        std::vector<double> data(n);
        for (std::size_t j = 0; j < n; ++j) data[j] = r.get<double>();
        ck.records_.emplace_back(
            std::move(name),
            Tensor(std::move(shape), std::move(data),
                   prec == 0 ? Precision::single : Precision::dbl));
    }
    if (r.p != r.end) throw io_error("trailing bytes in " + path.string());
    return ck;
}

}  // namespace revdeq
