#pragma once

#include "w2dual/common.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace w2dual {

/// Ordered manifest of named tensors packed into one flat array.
/// Offsets are assigned sequentially, so the slots partition the array
/// exactly (no gaps, no overlap) by construction.
class ParamLayout {
public:
    struct Slot {
        std::string name;
        Eigen::Index rows = 0, cols = 0;  // cols == 1 for vectors/scalars
        Eigen::Index offset = 0;
        Eigen::Index size() const { return rows * cols; }
    };

    /// Returns the slot index.
    Eigen::Index add(std::string name, Eigen::Index rows, Eigen::Index cols) {
        if (rows < 1 || cols < 1) throw DimensionError("ParamLayout::add: bad shape for " + name);
        for (const auto& s : slots_)
            if (s.name == name) throw DimensionError("ParamLayout::add: duplicate name " + name);
        slots_.push_back(Slot{std::move(name), rows, cols, total_});
        total_ += slots_.back().size();
        return static_cast<Eigen::Index>(slots_.size()) - 1;
    }

    const Slot& slot(Eigen::Index i) const { return slots_.at(static_cast<std::size_t>(i)); }
    const Slot& find(const std::string& name) const {
        for (const auto& s : slots_)
            if (s.name == name) return s;
        throw DimensionError("ParamLayout: no tensor named " + name);
    }
    Eigen::Index count() const { return static_cast<Eigen::Index>(slots_.size()); }
    Eigen::Index size() const { return total_; }

private:
    std::vector<Slot> slots_;
    Eigen::Index total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

/// Flat parameter (or gradient) vector bound to a layout. Matrix slots are
/// viewed row-major as (rows × cols) = (fan_in × fan_out).
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(LayoutPtr layout)
        : layout_(std::move(layout)), values_(Vector::Zero(layout_->size())) {}

    const LayoutPtr& layout() const { return layout_; }
    Eigen::Index size() const { return values_.size(); }
    Vector& values() { return values_; }
    const Vector& values() const { return values_; }

    void set_zero() { values_.setZero(); }

    Eigen::Map<Kernel> matrix(Eigen::Index slot) {
        const auto& s = layout_->slot(slot);
        return Eigen::Map<Kernel>(values_.data() + s.offset, s.rows, s.cols);
    }
    Eigen::Map<const Kernel> matrix(Eigen::Index slot) const {
        const auto& s = layout_->slot(slot);
        return Eigen::Map<const Kernel>(values_.data() + s.offset, s.rows, s.cols);
    }
    Eigen::Map<Vector> vector(Eigen::Index slot) {
        const auto& s = layout_->slot(slot);
        return Eigen::Map<Vector>(values_.data() + s.offset, s.size());
    }
    Eigen::Map<const Vector> vector(Eigen::Index slot) const {
        const auto& s = layout_->slot(slot);
        return Eigen::Map<const Vector>(values_.data() + s.offset, s.size());
    }
    double& scalar(Eigen::Index slot) {
        const auto& s = layout_->slot(slot);
        if (s.size() != 1) throw DimensionError("ParamVector::scalar: slot is not scalar");
        return values_[s.offset];
    }
    double scalar(Eigen::Index slot) const {
        const auto& s = layout_->slot(slot);
        if (s.size() != 1) throw DimensionError("ParamVector::scalar: slot is not scalar");
        return values_[s.offset];
    }

    /// Named read access (tests, serialization checks).
    Eigen::Map<const Kernel> named(const std::string& name) const {
        const auto& s = layout_->find(name);
        return Eigen::Map<const Kernel>(values_.data() + s.offset, s.rows, s.cols);
    }
    Eigen::Map<Kernel> named(const std::string& name) {
        const auto& s = layout_->find(name);
        return Eigen::Map<Kernel>(values_.data() + s.offset, s.rows, s.cols);
    }

private:
    LayoutPtr layout_;
    Vector values_;
};

inline nlohmann::json layout_to_json(const ParamLayout& layout) {
    nlohmann::json slots = nlohmann::json::array();
    for (Eigen::Index i = 0; i < layout.count(); ++i) {
        const auto& s = layout.slot(i);
        slots.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}, {"offset", s.offset}});
    }
    return slots;
}

inline nlohmann::json params_to_json(const ParamVector& p) {
    nlohmann::json j;
    j["layout"] = layout_to_json(*p.layout());
    j["values"] = std::vector<double>(p.values().data(), p.values().data() + p.size());
    return j;
}

/// Restores values into a ParamVector whose layout must match the manifest.
inline void params_from_json(const nlohmann::json& j, ParamVector& p) {
    const auto& slots = j.at("layout");
    if (static_cast<Eigen::Index>(slots.size()) != p.layout()->count())
        throw ConfigError("params_from_json: layout slot count mismatch");
    for (Eigen::Index i = 0; i < p.layout()->count(); ++i) {
        const auto& s = p.layout()->slot(i);
        const auto& js = slots[static_cast<std::size_t>(i)];
        if (js.at("name").get<std::string>() != s.name ||
            js.at("rows").get<Eigen::Index>() != s.rows ||
            js.at("cols").get<Eigen::Index>() != s.cols ||
            js.at("offset").get<Eigen::Index>() != s.offset)
            throw ConfigError("params_from_json: layout mismatch at slot " + s.name);
    }
    const auto& vals = j.at("values");
    if (static_cast<Eigen::Index>(vals.size()) != p.size())
        throw ConfigError("params_from_json: value count mismatch");
    for (Eigen::Index i = 0; i < p.size(); ++i)
        p.values()[i] = vals[static_cast<std::size_t>(i)].get<double>();
}

}  // namespace w2dual
