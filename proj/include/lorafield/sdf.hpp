#pragma once

// Signed-distance sources: an analytic shape tree (exact distances for
// primitives, documented bounds for blends), a small expression parser for
// the CLI, and point-sample files with nearest-neighbor lookup.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "lorafield/errors.hpp"
#include "lorafield/io_util.hpp"

namespace lorafield {

using Vec3 = std::array<double, 3>;

class AnalyticSdf {
public:
    double evaluate(double x, double y, double z) const { return eval(*root_, x, y, z); }
    double evaluate(const Vec3& p) const { return evaluate(p[0], p[1], p[2]); }

    // Exact signed distance.
    static AnalyticSdf sphere(Vec3 center, double radius) {
        return AnalyticSdf(std::make_shared<Node>(Node{Kind::sphere, center, {radius, 0, 0}, {}}));
    }
    // Exact signed distance to an axis-aligned box with half extents.
    static AnalyticSdf box(Vec3 center, Vec3 half_extents) {
        return AnalyticSdf(std::make_shared<Node>(
            Node{Kind::box, center, {half_extents[0], half_extents[1], half_extents[2]}, {}}));
    }
    // Exact signed distance; ring lies in the xz-plane through the center.
    static AnalyticSdf torus(Vec3 center, double major, double minor) {
        return AnalyticSdf(std::make_shared<Node>(Node{Kind::torus, center, {major, minor, 0}, {}}));
    }
    static AnalyticSdf translate(Vec3 offset, AnalyticSdf child) {
        Node n{Kind::translate, offset, {}, {child.root_}};
        return AnalyticSdf(std::make_shared<Node>(std::move(n)));
    }
    // min of children: exact outside, a (conservative) bound inside overlaps.
    static AnalyticSdf union_of(std::vector<AnalyticSdf> children) {
        if (children.size() < 2) throw std::invalid_argument("union: needs >= 2 children");
        Node n{Kind::union_min, {}, {}, {}};
        for (auto& c : children) n.children.push_back(c.root_);
        return AnalyticSdf(std::make_shared<Node>(std::move(n)));
    }
    // Polynomial smooth min; deviates from the exact union distance by at
    // most k / 4 near the blend region.
    static AnalyticSdf smooth_union(double k, AnalyticSdf a, AnalyticSdf b) {
        if (!(k > 0.0)) throw std::invalid_argument("smooth_union: k must be > 0");
        Node n{Kind::smooth_union, {}, {k, 0, 0}, {a.root_, b.root_}};
        return AnalyticSdf(std::make_shared<Node>(std::move(n)));
    }

private:
    enum class Kind { sphere, box, torus, translate, union_min, smooth_union };
    struct Node {
        Kind kind;
        Vec3 v{};
        std::array<double, 3> p{};
        std::vector<std::shared_ptr<const Node>> children;
    };

    explicit AnalyticSdf(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

    static double eval(const Node& n, double x, double y, double z) {
        switch (n.kind) {
        case Kind::sphere: {
            const double dx = x - n.v[0], dy = y - n.v[1], dz = z - n.v[2];
            return std::sqrt(dx * dx + dy * dy + dz * dz) - n.p[0];
        }
        case Kind::box: {
            const double qx = std::abs(x - n.v[0]) - n.p[0];
            const double qy = std::abs(y - n.v[1]) - n.p[1];
            const double qz = std::abs(z - n.v[2]) - n.p[2];
            const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0), oz = std::max(qz, 0.0);
            const double outside = std::sqrt(ox * ox + oy * oy + oz * oz);
            const double inside = std::min(std::max({qx, qy, qz}), 0.0);
            return outside + inside;
        }
        case Kind::torus: {
            const double dx = x - n.v[0], dy = y - n.v[1], dz = z - n.v[2];
            const double ring = std::sqrt(dx * dx + dz * dz) - n.p[0];
            return std::sqrt(ring * ring + dy * dy) - n.p[1];
        }
        case Kind::translate:
            return eval(*n.children[0], x - n.v[0], y - n.v[1], z - n.v[2]);
        case Kind::union_min: {
            double d = eval(*n.children[0], x, y, z);
            for (std::size_t i = 1; i < n.children.size(); ++i)
                d = std::min(d, eval(*n.children[i], x, y, z));
            return d;
        }
        case Kind::smooth_union: {
            const double a = eval(*n.children[0], x, y, z);
            const double b = eval(*n.children[1], x, y, z);
            const double k = n.p[0];
            const double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
            return b + (a - b) * h - k * h * (1.0 - h);
        }
        }
        return 0.0;
    }

    std::shared_ptr<const Node> root_;
};

// ---------------------------------------------------------------------------
// Shape expression parser
// ---------------------------------------------------------------------------
// Grammar: shape := name '(' arg {',' arg} ')' where args are numbers or
// shapes. Names: sphere(cx,cy,cz,r), box(cx,cy,cz,hx,hy,hz),
// torus(cx,cy,cz,R,r), translate(dx,dy,dz,shape), union(shape,shape,...),
// smooth_union(k,shape,shape).

namespace detail {

struct ShapeParser {
    const std::string& text;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    [[noreturn]] void fail(const std::string& what) {
        throw DataError("shape expression: " + what + " at offset " + std::to_string(pos));
    }

    void expect(char c) {
        skip_ws();
        if (pos >= text.size() || text[pos] != c) fail(std::string("expected '") + c + "'");
        ++pos;
    }

    std::string ident() {
        skip_ws();
        std::size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
            ++pos;
        if (pos == start) fail("expected shape name");
        return text.substr(start, pos - start);
    }

    double number() {
        skip_ws();
        std::size_t consumed = 0;
        double v = 0.0;
        try {
            v = std::stod(text.substr(pos), &consumed);
        } catch (const std::exception&) {
            fail("expected number");
        }
        pos += consumed;
        if (!std::isfinite(v)) fail("non-finite number");
        return v;
    }

    AnalyticSdf shape() {
        const std::string name = ident();
        expect('(');
        AnalyticSdf result = [&]() -> AnalyticSdf {
            if (name == "sphere") {
                const double cx = number(); expect(',');
                const double cy = number(); expect(',');
                const double cz = number(); expect(',');
                const double r = number();
                return AnalyticSdf::sphere({cx, cy, cz}, r);
            }
            if (name == "box") {
                const double cx = number(); expect(',');
                const double cy = number(); expect(',');
                const double cz = number(); expect(',');
                const double hx = number(); expect(',');
                const double hy = number(); expect(',');
                const double hz = number();
                return AnalyticSdf::box({cx, cy, cz}, {hx, hy, hz});
            }
            if (name == "torus") {
                const double cx = number(); expect(',');
                const double cy = number(); expect(',');
                const double cz = number(); expect(',');
                const double major = number(); expect(',');
                const double minor = number();
                return AnalyticSdf::torus({cx, cy, cz}, major, minor);
            }
            if (name == "translate") {
                const double dx = number(); expect(',');
                const double dy = number(); expect(',');
                const double dz = number(); expect(',');
                AnalyticSdf child = shape();
                return AnalyticSdf::translate({dx, dy, dz}, std::move(child));
            }
            if (name == "union") {
                std::vector<AnalyticSdf> children;
                children.push_back(shape());
                skip_ws();
                while (pos < text.size() && text[pos] == ',') {
                    ++pos;
                    children.push_back(shape());
                    skip_ws();
                }
                return AnalyticSdf::union_of(std::move(children));
            }
            if (name == "smooth_union") {
                const double k = number(); expect(',');
                AnalyticSdf a = shape(); expect(',');
                AnalyticSdf b = shape();
                return AnalyticSdf::smooth_union(k, std::move(a), std::move(b));
            }
            fail("unknown shape '" + name + "'");
        }();
        expect(')');
        return result;
    }
};

} // namespace detail

inline AnalyticSdf parse_sdf_expression(const std::string& text) {
    detail::ShapeParser p{text};
    AnalyticSdf s = p.shape();
    p.skip_ws();
    if (p.pos != text.size()) p.fail("trailing characters");
    return s;
}

// ---------------------------------------------------------------------------
// Sample files: header "SDFS v1 <count>" then one "x y z d" line per sample.
// ---------------------------------------------------------------------------

struct SdfSamples {
    std::vector<Vec3> points;        // inside [-1, 1]^3
    std::vector<double> distances;
};

inline SdfSamples load_sdf_samples(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string tag, version;
    long count = -1;
    if (!(in >> tag >> version >> count) || tag != "SDFS" || version != "v1")
        throw DataError(path + ": expected 'SDFS v1 <count>' header");
    if (count < 1) throw DataError(path + ": sample file empty");
    SdfSamples out;
    out.points.reserve(count);
    out.distances.reserve(count);
    for (long i = 0; i < count; ++i) {
        double x, y, z, d;
        if (!(in >> x >> y >> z >> d))
            throw DataError(path + ": truncated at sample " + std::to_string(i));
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(d))
            throw DataError(path + ": non-finite value at sample " + std::to_string(i));
        if (std::abs(x) > 1.0 || std::abs(y) > 1.0 || std::abs(z) > 1.0)
            throw DataError(path + ": coordinate outside [-1,1]^3 at sample " + std::to_string(i));
        out.points.push_back({x, y, z});
        out.distances.push_back(d);
    }
    std::string extra;
    if (in >> extra) throw DataError(path + ": trailing content after samples");
    return out;
}

inline void save_sdf_samples(const SdfSamples& samples, const std::string& path) {
    std::ostringstream out;
    out << "SDFS v1 " << samples.points.size() << "\n";
    char line[128];
    for (std::size_t i = 0; i < samples.points.size(); ++i) {
        std::snprintf(line, sizeof line, "%.17g %.17g %.17g %.17g\n", samples.points[i][0],
                      samples.points[i][1], samples.points[i][2], samples.distances[i]);
        out << line;
    }
    write_file_atomic(path, out.str());
}

// A queryable SDF target: analytic tree or nearest-neighbor over a sample
// file. Cheap to copy.
class SdfSource {
public:
    static SdfSource analytic(AnalyticSdf shape) {
        SdfSource s;
        s.analytic_ = std::make_shared<AnalyticSdf>(std::move(shape));
        return s;
    }
    static SdfSource from_samples(SdfSamples samples) {
        if (samples.points.empty()) throw DataError("SdfSource: sample set empty");
        SdfSource s;
        s.samples_ = std::make_shared<SdfSamples>(std::move(samples));
        return s;
    }

    bool is_analytic() const { return analytic_ != nullptr; }

    double evaluate(double x, double y, double z) const {
        if (analytic_) return analytic_->evaluate(x, y, z);
        const auto& pts = samples_->points;
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double dx = pts[i][0] - x, dy = pts[i][1] - y, dz = pts[i][2] - z;
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < best_d2) {
                best_d2 = d2;
                best = i;
            }
        }
        return samples_->distances[best];
    }
    double evaluate(const Vec3& p) const { return evaluate(p[0], p[1], p[2]); }

private:
    std::shared_ptr<const AnalyticSdf> analytic_;
    std::shared_ptr<const SdfSamples> samples_;
};

} // namespace lorafield
