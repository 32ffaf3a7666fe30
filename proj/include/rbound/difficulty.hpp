#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rbound {

// Named difficulty dimensions for one sample. Order-preserving so that
// serialized output is stable.
class DifficultyVector {
public:
    using Entry = std::pair<std::string, double>;

    DifficultyVector() = default;
    DifficultyVector(std::initializer_list<Entry> init) {
        for (const auto& e : init) set(e.first, e.second);
    }

    void set(const std::string& name, double value) {
        if (!(std::isfinite(value)) || value < 0.0)
            throw std::invalid_argument("difficulty dimension '" + name +
                                        "' must be finite and >= 0");
        for (auto& e : dims_) {
            if (e.first == name) {
                e.second = value;
                return;
            }
        }
        dims_.emplace_back(name, value);
    }

    bool has(const std::string& name) const {
        for (const auto& e : dims_)
            if (e.first == name) return true;
        return false;
    }

    double get(const std::string& name) const {
        for (const auto& e : dims_)
            if (e.first == name) return e.second;
        throw std::out_of_range("difficulty dimension '" + name + "' not present");
    }

    const std::vector<Entry>& entries() const { return dims_; }
    std::size_t size() const { return dims_.size(); }

    bool operator==(const DifficultyVector& o) const { return dims_ == o.dims_; }

private:
    std::vector<Entry> dims_;
};

} // namespace rbound
