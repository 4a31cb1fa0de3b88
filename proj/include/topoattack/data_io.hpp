#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "topoattack/point_cloud.hpp"

namespace topoattack {

enum class ShapeFamily { kSphere, kTorus, kDoubleTorus, kCylinder, kBox, kTwoSpheres };

inline const char* family_name(ShapeFamily f) {
    switch (f) {
        case ShapeFamily::kSphere: return "sphere";
        case ShapeFamily::kTorus: return "torus";
        case ShapeFamily::kDoubleTorus: return "double_torus";
        case ShapeFamily::kCylinder: return "cylinder";
        case ShapeFamily::kBox: return "box";
        case ShapeFamily::kTwoSpheres: return "two_spheres";
    }
    return "?";
}

inline ShapeFamily parse_family(const std::string& name) {
    for (ShapeFamily f : {ShapeFamily::kSphere, ShapeFamily::kTorus, ShapeFamily::kDoubleTorus,
                          ShapeFamily::kCylinder, ShapeFamily::kBox, ShapeFamily::kTwoSpheres}) {
        if (name == family_name(f)) return f;
    }
    throw InvalidArgument("unknown shape family '" + name + "'");
}

struct ShapeSpec {
    ShapeFamily family = ShapeFamily::kSphere;
    double radius = 1.0;      // sphere radius, torus ring radius, cylinder radius
    double tube = 0.4;        // torus tube radius
    double height = 2.0;      // cylinder length
    Vec3 extents{1.0, 0.7, 0.5};  // box half extents
    double separation = 3.0;  // two_spheres center distance
    int n_points = 256;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_points < 64) throw InvalidArgument("shape spec: need at least 64 points");
        if (!(radius > 0.0) || !(tube > 0.0) || !(height > 0.0) || !(separation > 0.0)) {
            throw InvalidArgument("shape spec: geometric parameters must be positive");
        }
        if (!(extents.minCoeff() > 0.0)) throw InvalidArgument("shape spec: extents must be positive");
        if (noise_sigma < 0.0) throw InvalidArgument("shape spec: noise must be nonnegative");
    }
};

// Translates to the centroid and scales the farthest point onto the unit
// sphere, so perturbation budgets mean the same thing for every cloud.
inline void normalize_unit(PointCloud& cloud) {
    if (cloud.points.empty()) return;
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : cloud.points) centroid += p;
    centroid /= static_cast<double>(cloud.size());
    double max_norm = 0.0;
    for (Vec3& p : cloud.points) {
        p -= centroid;
        max_norm = std::max(max_norm, p.norm());
    }
    if (!(max_norm > 0.0)) throw DegenerateInput("normalize_unit: cloud collapses to a point");
    for (Vec3& p : cloud.points) p /= max_norm;
}

namespace detail {

inline Vec3 sample_sphere(Rng& rng, double radius) {
    Vec3 dir = rng.normal3();
    while (dir.norm() < 1e-9) dir = rng.normal3();
    return radius * dir.normalized();
}

// Area-uniform torus point: ring angle is uniform, tube angle accepted with
// probability proportional to the local circumference.
inline Vec3 sample_torus(Rng& rng, double ring, double tube) {
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    double theta;
    for (;;) {
        theta = rng.uniform(0.0, 2.0 * M_PI);
        const double accept = (ring + tube * std::cos(theta)) / (ring + tube);
        if (rng.uniform() <= accept) break;
    }
    const double w = ring + tube * std::cos(theta);
    return Vec3(w * std::cos(phi), w * std::sin(phi), tube * std::sin(theta));
}

}  // namespace detail

inline PointCloud generate_shape(const ShapeSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    PointCloud cloud;
    cloud.points.reserve(spec.n_points);

    switch (spec.family) {
        case ShapeFamily::kSphere:
            for (int i = 0; i < spec.n_points; ++i) {
                cloud.points.push_back(detail::sample_sphere(rng, spec.radius));
            }
            break;
        case ShapeFamily::kTorus:
            for (int i = 0; i < spec.n_points; ++i) {
                cloud.points.push_back(detail::sample_torus(rng, spec.radius, spec.tube));
            }
            break;
        case ShapeFamily::kDoubleTorus: {
            // Two rings fused along x; center distance 2R keeps the union
            // connected while preserving all four loops.
            const Vec3 offset(spec.radius, 0.0, 0.0);
            for (int i = 0; i < spec.n_points; ++i) {
                const Vec3 p = detail::sample_torus(rng, spec.radius, spec.tube);
                cloud.points.push_back(i % 2 == 0 ? Vec3(p - offset) : Vec3(p + offset));
            }
            break;
        }
        case ShapeFamily::kCylinder:
            for (int i = 0; i < spec.n_points; ++i) {
                const double phi = rng.uniform(0.0, 2.0 * M_PI);
                const double z = rng.uniform(-0.5 * spec.height, 0.5 * spec.height);
                cloud.points.emplace_back(spec.radius * std::cos(phi), spec.radius * std::sin(phi),
                                          z);
            }
            break;
        case ShapeFamily::kBox: {
            const Vec3 e = spec.extents;
            // Face areas of the axis-aligned box, paired by axis.
            const double ax = 4.0 * e.y() * e.z();
            const double ay = 4.0 * e.x() * e.z();
            const double az = 4.0 * e.x() * e.y();
            const double total = 2.0 * (ax + ay + az);
            for (int i = 0; i < spec.n_points; ++i) {
                double pick = rng.uniform(0.0, total);
                int axis = 0;
                for (const double a : {ax, ax, ay, ay, az, az}) {
                    if (pick <= a) break;
                    pick -= a;
                    ++axis;
                }
                const int face = std::min(axis, 5);
                const double u = rng.uniform(-1.0, 1.0);
                const double v = rng.uniform(-1.0, 1.0);
                const double side = face % 2 == 0 ? 1.0 : -1.0;
                Vec3 p;
                switch (face / 2) {
                    case 0: p = Vec3(side * e.x(), u * e.y(), v * e.z()); break;
                    case 1: p = Vec3(u * e.x(), side * e.y(), v * e.z()); break;
                    default: p = Vec3(u * e.x(), v * e.y(), side * e.z()); break;
                }
                cloud.points.push_back(p);
            }
            break;
        }
        case ShapeFamily::kTwoSpheres: {
            const Vec3 offset(0.5 * spec.separation, 0.0, 0.0);
            for (int i = 0; i < spec.n_points; ++i) {
                const Vec3 p = detail::sample_sphere(rng, spec.radius);
                cloud.points.push_back(i % 2 == 0 ? Vec3(p - offset) : Vec3(p + offset));
            }
            break;
        }
    }

    if (spec.noise_sigma > 0.0) {
        for (Vec3& p : cloud.points) p += spec.noise_sigma * rng.normal3();
    }
    normalize_unit(cloud);
    return cloud;
}

// Optional header lines are written as '#' comments, which every loader in
// this file skips; callers use them to embed the resolved run configuration.
inline void save_cloud(const std::string& path, const PointCloud& cloud,
                       const std::vector<std::string>& header = {}) {
    cloud.check_finite();
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open '" + path + "' for writing");
    for (const std::string& line : header) os << "# " << line << '\n';
    char buf[128];
    for (const Vec3& p : cloud.points) {
        std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
        os << buf;
    }
    if (!os) throw InvalidArgument("failed writing '" + path + "'");
}

namespace detail {

inline double parse_coord(const std::string& token, std::size_t line_no) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(token, &used);
    } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + token + "'", line_no);
    }
    if (used != token.size()) throw ParseError("trailing characters in number '" + token + "'", line_no);
    if (!std::isfinite(value)) throw ParseError("non-finite coordinate '" + token + "'", line_no);
    return value;
}

}  // namespace detail

inline PointCloud load_cloud(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open '" + path + "'");
    PointCloud cloud;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string a, b, c;
        if (!(ls >> a)) continue;  // blank line
        if (a[0] == '#') continue;
        if (!(ls >> b >> c)) throw ParseError("expected three coordinates", line_no);
        std::string extra;
        if (ls >> extra) throw ParseError("unexpected token '" + extra + "'", line_no);
        cloud.points.emplace_back(detail::parse_coord(a, line_no), detail::parse_coord(b, line_no),
                                  detail::parse_coord(c, line_no));
    }
    return cloud;
}

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
};

enum class MeshFormat { kOff, kPlyAscii };

namespace detail {

struct LineReader {
    std::istream& is;
    std::size_t line_no = 0;

    // Next non-empty, non-comment line split into tokens.
    bool next(std::vector<std::string>& tokens) {
        std::string line;
        while (std::getline(is, line)) {
            ++line_no;
            tokens.clear();
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) {
                if (tok[0] == '#') break;
                tokens.push_back(tok);
            }
            if (!tokens.empty()) return true;
        }
        return false;
    }
};

inline int parse_index(const std::string& token, int n_vertices, std::size_t line_no) {
    std::size_t used = 0;
    long value = 0;
    try {
        value = std::stol(token, &used);
    } catch (const std::exception&) {
        throw ParseError("expected a vertex index, got '" + token + "'", line_no);
    }
    if (used != token.size()) throw ParseError("trailing characters in index '" + token + "'", line_no);
    if (value < 0 || value >= n_vertices) {
        throw ParseError("vertex index " + std::to_string(value) + " out of range", line_no);
    }
    return static_cast<int>(value);
}

// Shared by OFF and PLY: "k i0 i1 ... i(k-1)" rows, fan-triangulated.
inline void parse_face_row(const std::vector<std::string>& tokens, int n_vertices,
                           std::size_t line_no, std::vector<std::array<int, 3>>& faces) {
    const int k = parse_index(tokens[0], std::numeric_limits<int>::max(), line_no);
    if (k < 3) throw ParseError("face needs at least three vertices", line_no);
    if (static_cast<int>(tokens.size()) != k + 1) {
        throw ParseError("face lists " + tokens[0] + " vertices but row has " +
                             std::to_string(tokens.size() - 1),
                         line_no);
    }
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = parse_index(tokens[static_cast<std::size_t>(i) + 1], n_vertices, line_no);
    for (int i = 1; i + 1 < k; ++i) faces.push_back({idx[0], idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i) + 1]});
}

inline TriMesh load_off(std::istream& is) {
    LineReader reader{is};
    std::vector<std::string> tokens;
    if (!reader.next(tokens) || tokens[0] != "OFF") {
        throw ParseError("missing OFF header", reader.line_no == 0 ? 1 : reader.line_no);
    }
    if (tokens.size() == 1 && !reader.next(tokens)) throw ParseError("missing count line", reader.line_no);
    // Counts either follow the OFF keyword or sit on their own line.
    std::size_t base = tokens[0] == "OFF" ? 1 : 0;
    if (tokens.size() - base != 3) throw ParseError("expected vertex/face/edge counts", reader.line_no);
    const int nv = parse_index(tokens[base], std::numeric_limits<int>::max(), reader.line_no);
    const int nf = parse_index(tokens[base + 1], std::numeric_limits<int>::max(), reader.line_no);

    TriMesh mesh;
    mesh.vertices.reserve(static_cast<std::size_t>(nv));
    for (int i = 0; i < nv; ++i) {
        if (!reader.next(tokens)) throw ParseError("file ends before vertex " + std::to_string(i), reader.line_no);
        if (tokens.size() != 3) throw ParseError("vertex row needs three coordinates", reader.line_no);
        mesh.vertices.emplace_back(parse_coord(tokens[0], reader.line_no),
                                   parse_coord(tokens[1], reader.line_no),
                                   parse_coord(tokens[2], reader.line_no));
    }
    for (int i = 0; i < nf; ++i) {
        if (!reader.next(tokens)) throw ParseError("file ends before face " + std::to_string(i), reader.line_no);
        parse_face_row(tokens, nv, reader.line_no, mesh.faces);
    }
    return mesh;
}

inline TriMesh load_ply_ascii(std::istream& is) {
    LineReader reader{is};
    std::vector<std::string> tokens;
    if (!reader.next(tokens) || tokens[0] != "ply") {
        throw ParseError("missing ply header", reader.line_no == 0 ? 1 : reader.line_no);
    }
    int nv = -1;
    int nf = -1;
    std::vector<std::string> elements;  // declaration order
    bool ascii = false;
    for (;;) {
        if (!reader.next(tokens)) throw ParseError("header never ends", reader.line_no);
        if (tokens[0] == "end_header") break;
        if (tokens[0] == "format") {
            if (tokens.size() < 2 || tokens[1] != "ascii") {
                throw ParseError("only ascii ply is supported", reader.line_no);
            }
            ascii = true;
        } else if (tokens[0] == "element") {
            if (tokens.size() != 3) throw ParseError("malformed element declaration", reader.line_no);
            const int count = parse_index(tokens[2], std::numeric_limits<int>::max(), reader.line_no);
            if (tokens[1] == "vertex") {
                nv = count;
            } else if (tokens[1] == "face") {
                nf = count;
            } else {
                throw ParseError("unsupported element '" + tokens[1] + "'", reader.line_no);
            }
            elements.push_back(tokens[1]);
        } else if (tokens[0] == "property" || tokens[0] == "comment") {
            continue;
        } else {
            throw ParseError("unexpected header keyword '" + tokens[0] + "'", reader.line_no);
        }
    }
    if (!ascii) throw ParseError("ply file declares no ascii format", reader.line_no);
    if (nv < 0) throw ParseError("ply file declares no vertex element", reader.line_no);

    TriMesh mesh;
    for (const std::string& element : elements) {
        const int count = element == "vertex" ? nv : nf;
        for (int i = 0; i < count; ++i) {
            if (!reader.next(tokens)) {
                throw ParseError("file ends inside element '" + element + "'", reader.line_no);
            }
            if (element == "vertex") {
                if (tokens.size() < 3) throw ParseError("vertex row needs three coordinates", reader.line_no);
                mesh.vertices.emplace_back(parse_coord(tokens[0], reader.line_no),
                                           parse_coord(tokens[1], reader.line_no),
                                           parse_coord(tokens[2], reader.line_no));
            } else {
                parse_face_row(tokens, static_cast<int>(mesh.vertices.size()), reader.line_no,
                               mesh.faces);
            }
        }
    }
    return mesh;
}

}  // namespace detail

inline TriMesh load_mesh(const std::string& path, MeshFormat format) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open '" + path + "'");
    return format == MeshFormat::kOff ? detail::load_off(is) : detail::load_ply_ascii(is);
}

// Area-weighted triangle pick plus a uniform barycentric draw per sample.
inline PointCloud sample_surface(const TriMesh& mesh, int n, std::uint64_t seed) {
    if (mesh.faces.empty()) throw InvalidArgument("sample_surface: mesh has no faces");
    if (n < 1) throw InvalidArgument("sample_surface: need at least one sample");
    std::vector<double> cumulative(mesh.faces.size());
    double total = 0.0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& face = mesh.faces[f];
        const Vec3 ab = mesh.vertices[static_cast<std::size_t>(face[1])] - mesh.vertices[static_cast<std::size_t>(face[0])];
        const Vec3 ac = mesh.vertices[static_cast<std::size_t>(face[2])] - mesh.vertices[static_cast<std::size_t>(face[0])];
        total += 0.5 * ab.cross(ac).norm();
        cumulative[f] = total;
    }
    if (!(total > 0.0)) throw DegenerateInput("sample_surface: zero total area");

    Rng rng(seed);
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double pick = rng.uniform(0.0, total);
        auto it = std::lower_bound(cumulative.begin(), cumulative.end(), pick);
        if (it == cumulative.end()) --it;
        const auto& face = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
        double u = rng.uniform();
        double v = rng.uniform();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(face[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(face[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(face[2])];
        cloud.points.push_back(a + u * (b - a) + v * (c - a));
    }
    return cloud;
}

struct ManifestEntry {
    std::string id;
    std::string path;
    int label = -1;
    std::string split;  // "train" or "test"
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_names;  // index = label

    void validate() const {
        std::map<std::string, int> seen;
        std::vector<char> used(class_names.size(), 0);
        for (const ManifestEntry& e : entries) {
            if (++seen[e.id] > 1) throw InvalidArgument("duplicate sample id '" + e.id + "'");
            if (e.label < 0 || e.label >= static_cast<int>(class_names.size())) {
                throw InvalidArgument("sample '" + e.id + "' labeled outside the class table");
            }
            if (e.split != "train" && e.split != "test") {
                throw InvalidArgument("sample '" + e.id + "' has unknown split '" + e.split + "'");
            }
            used[static_cast<std::size_t>(e.label)] = 1;
        }
        for (std::size_t c = 0; c < used.size(); ++c) {
            if (!used[c]) {
                throw InvalidArgument("class " + std::to_string(c) + " ('" + class_names[c] +
                                      "') has no samples");
            }
        }
    }
};

inline void save_manifest(const std::string& path, const DatasetManifest& manifest,
                          const std::vector<std::string>& header = {}) {
    manifest.validate();
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open '" + path + "' for writing");
    for (const std::string& line : header) os << "# " << line << '\n';
    for (std::size_t c = 0; c < manifest.class_names.size(); ++c) {
        os << "class " << c << ' ' << manifest.class_names[c] << '\n';
    }
    for (const ManifestEntry& e : manifest.entries) {
        os << "sample " << e.id << ' ' << e.path << ' ' << e.label << ' ' << e.split << '\n';
    }
    if (!os) throw InvalidArgument("failed writing '" + path + "'");
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open '" + path + "'");
    DatasetManifest manifest;
    detail::LineReader reader{is};
    std::vector<std::string> tokens;
    while (reader.next(tokens)) {
        if (tokens[0] == "class") {
            if (tokens.size() != 3) throw ParseError("class rows are 'class <label> <name>'", reader.line_no);
            const int label = detail::parse_index(tokens[1], std::numeric_limits<int>::max(), reader.line_no);
            if (label != static_cast<int>(manifest.class_names.size())) {
                throw ParseError("class labels must appear in order", reader.line_no);
            }
            manifest.class_names.push_back(tokens[2]);
        } else if (tokens[0] == "sample") {
            if (tokens.size() != 5) {
                throw ParseError("sample rows are 'sample <id> <path> <label> <split>'", reader.line_no);
            }
            ManifestEntry e;
            e.id = tokens[1];
            e.path = tokens[2];
            e.label = detail::parse_index(tokens[3], std::numeric_limits<int>::max(), reader.line_no);
            e.split = tokens[4];
            manifest.entries.push_back(std::move(e));
        } else {
            throw ParseError("unknown manifest keyword '" + tokens[0] + "'", reader.line_no);
        }
    }
    manifest.validate();
    return manifest;
}

}  // namespace topoattack
