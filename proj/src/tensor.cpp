#include "splitloc/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "binio.hpp"

namespace splitloc {

int64_t shape_numel(std::span<const int> shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0)
            throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(std::span<const int> shape) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i)
            os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(std::vector<int> s, bool rg) : shape(std::move(s)), requires_grad(rg) {
    data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Tensor Tensor::scalar(double v, bool rg) {
    Tensor t(std::vector<int>{1}, rg);
    t.data[0] = v;
    return t;
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> values, bool rg) {
    if (shape_numel(s) != static_cast<int64_t>(values.size()))
        throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(s));
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    t.requires_grad = rg;
    return t;
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size())
        grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    grad.assign(data.size(), 0.0);
}

const char* param_kind_name(ParamKind k) {
    switch (k) {
    case ParamKind::Conv: return "conv";
    case ParamKind::Linear: return "linear";
    case ParamKind::Bias: return "bias";
    case ParamKind::Norm: return "norm";
    }
    return "?";
}

Tensor& ParamSet::add(std::string name, ParamKind kind, Tensor t) {
    if (contains(name))
        throw std::invalid_argument("duplicate parameter name: " + name);
    entries_.push_back(Entry{std::move(name), kind, std::move(t)});
    return entries_.back().tensor;
}

Tensor& ParamSet::at(std::string_view name) {
    for (auto& e : entries_)
        if (e.name == name)
            return e.tensor;
    throw std::out_of_range("no parameter named " + std::string(name));
}

const Tensor& ParamSet::at(std::string_view name) const {
    return const_cast<ParamSet*>(this)->at(name);
}

bool ParamSet::contains(std::string_view name) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const Entry& e) { return e.name == name; });
}

int64_t ParamSet::param_count() const {
    int64_t n = 0;
    for (const auto& e : entries_)
        n += e.tensor.numel();
    return n;
}

bool ParamSet::same_structure(const ParamSet& other, std::string* first_mismatch) const {
    if (entries_.size() != other.entries_.size()) {
        if (first_mismatch)
            *first_mismatch = "entry count " + std::to_string(entries_.size()) + " vs " +
                              std::to_string(other.entries_.size());
        return false;
    }
    for (size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i];
        const auto& b = other.entries_[i];
        if (a.name != b.name) {
            if (first_mismatch)
                *first_mismatch = a.name + " vs " + b.name;
            return false;
        }
        if (a.kind != b.kind) {
            if (first_mismatch)
                *first_mismatch = a.name + " kind " + param_kind_name(a.kind) + " vs " +
                                  param_kind_name(b.kind);
            return false;
        }
        if (a.tensor.shape != b.tensor.shape) {
            if (first_mismatch)
                *first_mismatch = a.name + " shape " + shape_str(a.tensor.shape) + " vs " +
                                  shape_str(b.tensor.shape);
            return false;
        }
    }
    return true;
}

void ParamSet::zero_grads() {
    for (auto& e : entries_)
        if (e.tensor.requires_grad)
            e.tensor.zero_grad();
}

ParamSet ParamSet::clone() const {
    ParamSet out;
    out.entries_ = entries_;
    return out;
}

void ParamSet::copy_values_from(const ParamSet& other) {
    std::string why;
    if (!same_structure(other, &why))
        throw std::invalid_argument("parameter sets differ: " + why);
    for (size_t i = 0; i < entries_.size(); ++i)
        entries_[i].tensor.data = other.entries_[i].tensor.data;
}

void ParamSet::save(const std::string& path) const {
    auto os = binio::open_out(path);
    binio::write_bytes(os, "FWPS", 4);
    binio::write_u32(os, 1); // version
    binio::write_u32(os, static_cast<uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        if (e.name.size() > 0xFFFF)
            throw IoError("parameter name too long: " + e.name);
        binio::write_u16(os, static_cast<uint16_t>(e.name.size()));
        binio::write_bytes(os, e.name.data(), e.name.size());
        binio::write_u8(os, static_cast<uint8_t>(e.kind));
        binio::write_u8(os, static_cast<uint8_t>(e.tensor.ndim()));
        for (int d : e.tensor.shape)
            binio::write_u32(os, static_cast<uint32_t>(d));
        binio::write_bytes(os, e.tensor.data.data(), e.tensor.data.size() * sizeof(double));
    }
    if (!os)
        throw IoError("write failed: " + path);
}

ParamSet ParamSet::load(const std::string& path) {
    auto is = binio::open_in(path);
    binio::expect_magic(is, "FWPS", "checkpoint");
    const uint32_t version = binio::read_u32(is, "checkpoint version");
    if (version != 1)
        throw BadVersionError("checkpoint: unsupported version " + std::to_string(version));
    const uint32_t count = binio::read_u32(is, "checkpoint entry count");
    ParamSet out;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = binio::read_u16(is, "entry name length");
        std::string name(name_len, '\0');
        binio::read_bytes(is, name.data(), name_len, "entry name");
        const uint8_t kind = binio::read_u8(is, "entry kind");
        if (kind > 3)
            throw DimensionError("checkpoint: unknown parameter kind " + std::to_string(kind) +
                                 " for " + name);
        const uint8_t ndim = binio::read_u8(is, "entry rank");
        if (ndim == 0 || ndim > 8)
            throw DimensionError("checkpoint: bad rank " + std::to_string(ndim) + " for " + name);
        std::vector<int> shape(ndim);
        int64_t numel = 1;
        for (auto& d : shape) {
            const uint32_t v = binio::read_u32(is, "entry dim");
            if (v == 0 || v > (1u << 28))
                throw DimensionError("checkpoint: bad dimension " + std::to_string(v) + " for " +
                                     name);
            d = static_cast<int>(v);
            numel *= d;
        }
        Tensor t(shape, true);
        binio::read_bytes(is, t.data.data(), static_cast<size_t>(numel) * sizeof(double),
                          "entry data");
        out.add(std::move(name), static_cast<ParamKind>(kind), std::move(t));
    }
    // Anything left over means the header undercounted.
    char extra;
    is.read(&extra, 1);
    if (is.gcount() != 0)
        throw DimensionError("checkpoint: trailing bytes after last entry");
    return out;
}

} // namespace splitloc
