#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "revdeq/tensor.hpp"

namespace revdeq {

// Binary container of named tensors. Record order is preserved, so saving a
// loaded checkpoint reproduces the file byte for byte.
//
// Layout (little endian):
//   magic "RDEQCKPT" | u32 version=1 | u64 record_count
//   per record: u32 name_len | name bytes | u8 precision | u32 rank
//               | u64 dims[rank] | f64 data[prod(dims)]
class Checkpoint {
public:
    void add(const std::string& name, Tensor t);
    const Tensor* find(const std::string& name) const;
    const Tensor& get(const std::string& name) const;  // throws io_error if absent

    const std::vector<std::pair<std::string, Tensor>>& records() const { return records_; }

    void save(const std::filesystem::path& path) const;  // temp file + rename
    static Checkpoint load(const std::filesystem::path& path);

    // Scalar convenience for optimizer state; stored as rank-0 tensors.
    void add_scalar(const std::string& name, double v);
    void add_u64(const std::string& name, std::uint64_t v);  // bit-cast into a double
    double get_scalar(const std::string& name) const;
    std::uint64_t get_u64(const std::string& name) const;

private:
    std::vector<std::pair<std::string, Tensor>> records_;
};

}  // namespace revdeq
