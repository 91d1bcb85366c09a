#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <vector>

#include "mow/errors.hpp"

namespace mow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Flat vector of all model weights with named segments. Segments tile the
// vector exactly: each add() appends at the current end, so there are no
// gaps or overlaps by construction.
class ParamVector {
public:
    struct Segment {
        std::string name;
        Eigen::Index offset = 0;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        Eigen::Index size() const { return rows * cols; }
    };

    Vector values;

    Eigen::Index add(std::string name, Eigen::Index rows, Eigen::Index cols) {
        if (rows <= 0 || cols <= 0)
            throw ShapeError("ParamVector segment '" + name + "' must have positive dims");
        if (has(name))
            throw ShapeError("duplicate ParamVector segment '" + name + "'");
        Segment seg{std::move(name), values.size(), rows, cols};
        values.conservativeResize(values.size() + seg.size());
        values.tail(seg.size()).setZero();
        segments_.push_back(std::move(seg));
        return static_cast<Eigen::Index>(segments_.size()) - 1;
    }

    bool has(std::string_view name) const {
        for (const auto& s : segments_)
            if (s.name == name) return true;
        return false;
    }

    Eigen::Index index_of(std::string_view name) const {
        for (std::size_t i = 0; i < segments_.size(); ++i)
            if (segments_[i].name == name) return static_cast<Eigen::Index>(i);
        throw ShapeError("unknown ParamVector segment '" + std::string(name) + "'");
    }

    const Segment& segment(std::string_view name) const {
        return segments_[static_cast<std::size_t>(index_of(name))];
    }
    const Segment& segment(Eigen::Index idx) const {
        return segments_[static_cast<std::size_t>(idx)];
    }

    // Column-major view of one segment.
    Eigen::Map<const Matrix> matrix(std::string_view name) const {
        const Segment& s = segment(name);
        return {values.data() + s.offset, s.rows, s.cols};
    }
    Eigen::Map<Matrix> matrix(std::string_view name) {
        const Segment& s = segment(name);
        return {values.data() + s.offset, s.rows, s.cols};
    }

    const std::vector<Segment>& segments() const { return segments_; }
    Eigen::Index size() const { return values.size(); }

private:
    std::vector<Segment> segments_;
};

}  // namespace mow
