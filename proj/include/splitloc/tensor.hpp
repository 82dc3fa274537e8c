#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace splitloc {

int64_t shape_numel(std::span<const int> shape);
std::string shape_str(std::span<const int> shape);

// Dense row-major f64 tensor with an optional gradient buffer.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // sized lazily, same length as data

    Tensor() = default;
    explicit Tensor(std::vector<int> s, bool rg = false);
    static Tensor scalar(double v, bool rg = false);
    static Tensor from(std::vector<int> s, std::vector<double> values, bool rg = false);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    void ensure_grad(); // allocate-and-zero if absent
    void zero_grad();
};

enum class ParamKind : uint8_t { Conv = 0, Linear = 1, Bias = 2, Norm = 3 };

const char* param_kind_name(ParamKind k);

// Ordered collection of named parameters. Iteration order is insertion
// order and is part of the contract: checkpoints, averaging and the
// optimizer all walk entries in this order.
class ParamSet {
public:
    struct Entry {
        std::string name;
        ParamKind kind;
        Tensor tensor;
    };

    Tensor& add(std::string name, ParamKind kind, Tensor t);
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }
    int64_t param_count() const;

    // Same names, kinds and shapes in the same order.
    bool same_structure(const ParamSet& other, std::string* first_mismatch = nullptr) const;

    void zero_grads();
    ParamSet clone() const;
    void copy_values_from(const ParamSet& other); // structure must match

    // Checkpoint container: magic "FWPS", version, entry table.
    void save(const std::string& path) const;
    static ParamSet load(const std::string& path);

private:
    std::vector<Entry> entries_;
};

} // namespace splitloc
