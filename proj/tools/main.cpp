#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "topoattack/attack.hpp"
#include "topoattack/data_io.hpp"
#include "topoattack/metrics.hpp"

using namespace topoattack;

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Config files: flat "key = value" lines grouped under [section] headers.
// Values layer as defaults <- config file <- command-line flags; the resolved
// values are echoed into every output artifact so a run can be reproduced
// bit-for-bit from its own outputs.

struct ConfigItem {
    std::string key, value;
    std::size_t line = 0;
};

struct ConfigSection {
    std::string name;
    std::vector<ConfigItem> items;
};

std::string trim(const std::string& s) {
    const char* ws = " \t\r";
    const auto a = s.find_first_not_of(ws);
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
}

std::vector<ConfigSection> read_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open config '" + path + "'");
    std::vector<ConfigSection> sections;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        const auto hash = raw.find_first_of("#;");
        std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("unterminated section header", line_no);
            const std::string name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) throw ParseError("empty section name", line_no);
            sections.push_back({name, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) throw ParseError("expected 'key = value'", line_no);
        if (sections.empty()) throw ParseError("key '" + key + "' outside any section", line_no);
        sections.back().items.push_back({key, value, line_no});
    }
    return sections;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t parse_u64(const std::string& token, std::size_t line_no) {
    std::size_t used = 0;
    std::uint64_t value = 0;
    try {
        value = std::stoull(token, &used);
    } catch (const std::exception&) {
        throw ParseError("expected an unsigned integer, got '" + token + "'", line_no);
    }
    if (used != token.size()) throw ParseError("trailing junk in '" + token + "'", line_no);
    return value;
}

int parse_int(const std::string& token, std::size_t line_no) {
    std::size_t used = 0;
    long value = 0;
    try {
        value = std::stol(token, &used);
    } catch (const std::exception&) {
        throw ParseError("expected an integer, got '" + token + "'", line_no);
    }
    if (used != token.size()) throw ParseError("trailing junk in '" + token + "'", line_no);
    return static_cast<int>(value);
}

struct Binding {
    std::string key;
    std::function<void(const std::string&, std::size_t)> set;
    std::function<std::string()> render;
};

Binding bind_double(std::string key, double* ref) {
    return {std::move(key),
            [ref](const std::string& v, std::size_t ln) { *ref = detail::parse_coord(v, ln); },
            [ref] { return fmt_double(*ref); }};
}

Binding bind_int(std::string key, int* ref) {
    return {std::move(key),
            [ref](const std::string& v, std::size_t ln) {
                *ref = parse_int(v, ln);
            },
            [ref] { return std::to_string(*ref); }};
}

Binding bind_u64(std::string key, std::uint64_t* ref) {
    return {std::move(key),
            [ref](const std::string& v, std::size_t ln) { *ref = parse_u64(v, ln); },
            [ref] { return std::to_string(*ref); }};
}

Binding bind_str(std::string key, std::string* ref) {
    return {std::move(key), [ref](const std::string& v, std::size_t) { *ref = v; },
            [ref] { return *ref; }};
}

// Every tunable the tool understands, grouped by config section. The same
// table drives file parsing (unknown keys are rejected) and the echo.
struct ConfigSchema {
    std::vector<std::pair<std::string, std::vector<Binding>>> sections;

    const Binding* find(const std::string& sec, const std::string& key) const {
        for (const auto& [name, keys] : sections) {
            if (name != sec) continue;
            for (const Binding& b : keys) {
                if (b.key == key) return &b;
            }
        }
        return nullptr;
    }

    void apply(const std::vector<ConfigSection>& file) const {
        for (const ConfigSection& sec : file) {
            bool known_section = false;
            for (const auto& [name, keys] : sections) known_section |= name == sec.name;
            if (!known_section) throw InvalidArgument("config: unknown section '[" + sec.name + "]'");
            for (const ConfigItem& item : sec.items) {
                const Binding* b = find(sec.name, item.key);
                if (!b) {
                    throw InvalidArgument("config: unknown key '" + sec.name + "." + item.key + "'");
                }
                b->set(item.value, item.line);
            }
        }
    }

    std::string render(std::initializer_list<const char*> names) const {
        std::string out;
        for (const char* want : names) {
            for (const auto& [name, keys] : sections) {
                if (name != want) continue;
                if (!out.empty()) out += '\n';
                out += "[" + name + "]\n";
                for (const Binding& b : keys) out += b.key + " = " + b.render() + '\n';
            }
        }
        return out;
    }
};

std::vector<std::string> header_lines(const std::string& title, const std::string& echo) {
    std::vector<std::string> lines{title};
    std::istringstream is(echo);
    for (std::string l; std::getline(is, l);) lines.push_back(l);
    return lines;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open '" + path + "' for writing");
    os << content;
    if (!os) throw InvalidArgument("failed writing '" + path + "'");
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Work items run on a small pool; all per-item randomness comes from seeds
// mixed per sample id, so any pool width produces identical artifacts.
void run_pool(int jobs, std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    jobs = std::min<int>(jobs, static_cast<int>(n));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(jobs));
        for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

PointCloud load_sample(const fs::path& base, const ManifestEntry& e) {
    PointCloud cloud = load_cloud((base / e.path).string());
    cloud.id = e.id;
    cloud.label = e.label;
    return cloud;
}

std::vector<ManifestEntry> split_entries(const DatasetManifest& man, const std::string& split) {
    std::vector<ManifestEntry> out;
    for (const ManifestEntry& e : man.entries) {
        if (e.split == split) out.push_back(e);
    }
    return out;
}

std::string diagram_text(const PersistenceDiagram& dgm) {
    std::string out;
    char buf[96];
    for (const PersistencePair& p : dgm.pairs) {
        std::snprintf(buf, sizeof buf, "%d %.9g %.9g\n", p.dim, p.birth, p.death);
        out += buf;
    }
    return out;
}

PersistenceDiagram diagram_of(const std::vector<Vec3>& pts, std::uint64_t perturb_seed) {
    return compute_persistence(alpha_filtration(delaunay3d(pts, perturb_seed)));
}

// ---------------------------------------------------------------------------
// gen-data

struct GenOpts {
    std::string spec_path, out_dir;
    bool quiet = false;
};

struct ClassSpec {
    std::string name;
    ShapeSpec shape;
};

struct GenSpec {
    std::uint64_t seed = 1;
    int points = 256;
    double noise = 0.02;
    int train = 40;
    int test = 10;
    std::vector<ClassSpec> classes;
};

GenSpec parse_gen_spec(const std::string& path) {
    GenSpec spec;
    for (const ConfigSection& sec : read_config_file(path)) {
        if (sec.name == "dataset") {
            for (const ConfigItem& it : sec.items) {
                if (it.key == "seed") spec.seed = parse_u64(it.value, it.line);
                else if (it.key == "points") spec.points = parse_int(it.value, it.line);
                else if (it.key == "noise") spec.noise = detail::parse_coord(it.value, it.line);
                else if (it.key == "train") spec.train = parse_int(it.value, it.line);
                else if (it.key == "test") spec.test = parse_int(it.value, it.line);
                else throw InvalidArgument("gen spec: unknown key 'dataset." + it.key + "'");
            }
            continue;
        }
        if (sec.name.rfind("class ", 0) == 0) {
            ClassSpec cs;
            cs.name = trim(sec.name.substr(6));
            if (cs.name.empty()) throw InvalidArgument("gen spec: class section without a name");
            cs.shape.n_points = -1;
            cs.shape.noise_sigma = -1.0;
            bool family_set = false;
            for (const ConfigItem& it : sec.items) {
                if (it.key == "family") {
                    cs.shape.family = parse_family(it.value);
                    family_set = true;
                } else if (it.key == "radius") cs.shape.radius = detail::parse_coord(it.value, it.line);
                else if (it.key == "tube") cs.shape.tube = detail::parse_coord(it.value, it.line);
                else if (it.key == "height") cs.shape.height = detail::parse_coord(it.value, it.line);
                else if (it.key == "ex") cs.shape.extents.x() = detail::parse_coord(it.value, it.line);
                else if (it.key == "ey") cs.shape.extents.y() = detail::parse_coord(it.value, it.line);
                else if (it.key == "ez") cs.shape.extents.z() = detail::parse_coord(it.value, it.line);
                else if (it.key == "separation") cs.shape.separation = detail::parse_coord(it.value, it.line);
                else if (it.key == "points") cs.shape.n_points = parse_int(it.value, it.line);
                else if (it.key == "noise") cs.shape.noise_sigma = detail::parse_coord(it.value, it.line);
                else throw InvalidArgument("gen spec: unknown key '" + sec.name + "." + it.key + "'");
            }
            if (!family_set) cs.shape.family = parse_family(cs.name);
            for (const ClassSpec& prev : spec.classes) {
                if (prev.name == cs.name) {
                    throw InvalidArgument("gen spec: duplicate class '" + cs.name + "'");
                }
            }
            spec.classes.push_back(std::move(cs));
            continue;
        }
        throw InvalidArgument("gen spec: unknown section '[" + sec.name + "]'");
    }
    if (spec.classes.empty()) throw InvalidArgument("gen spec: no [class ...] sections");
    if (spec.train < 0 || spec.test < 0 || spec.train + spec.test < 1) {
        throw InvalidArgument("gen spec: need at least one sample per class");
    }
    for (ClassSpec& cs : spec.classes) {
        if (cs.shape.n_points < 0) cs.shape.n_points = spec.points;
        if (cs.shape.noise_sigma < 0.0) cs.shape.noise_sigma = spec.noise;
        cs.shape.validate();
    }
    return spec;
}

std::string render_gen_spec(const GenSpec& spec) {
    std::string out = "[dataset]\n";
    out += "seed = " + std::to_string(spec.seed) + '\n';
    out += "points = " + std::to_string(spec.points) + '\n';
    out += "noise = " + fmt_double(spec.noise) + '\n';
    out += "train = " + std::to_string(spec.train) + '\n';
    out += "test = " + std::to_string(spec.test) + '\n';
    for (const ClassSpec& cs : spec.classes) {
        out += "\n[class " + cs.name + "]\n";
        out += "family = " + std::string(family_name(cs.shape.family)) + '\n';
        out += "radius = " + fmt_double(cs.shape.radius) + '\n';
        out += "tube = " + fmt_double(cs.shape.tube) + '\n';
        out += "height = " + fmt_double(cs.shape.height) + '\n';
        out += "ex = " + fmt_double(cs.shape.extents.x()) + '\n';
        out += "ey = " + fmt_double(cs.shape.extents.y()) + '\n';
        out += "ez = " + fmt_double(cs.shape.extents.z()) + '\n';
        out += "separation = " + fmt_double(cs.shape.separation) + '\n';
        out += "points = " + std::to_string(cs.shape.n_points) + '\n';
        out += "noise = " + fmt_double(cs.shape.noise_sigma) + '\n';
    }
    return out;
}

int run_gen(const GenOpts& opts) {
    const GenSpec spec = parse_gen_spec(opts.spec_path);
    const std::string echo = render_gen_spec(spec);
    const auto header = header_lines("topoattack gen-data", echo);
    fs::create_directories(opts.out_dir);

    DatasetManifest man;
    for (const ClassSpec& cs : spec.classes) man.class_names.push_back(cs.name);

    int written = 0;
    for (std::size_t label = 0; label < spec.classes.size(); ++label) {
        const ClassSpec& cs = spec.classes[label];
        for (int is_test = 0; is_test < 2; ++is_test) {
            const std::string split = is_test ? "test" : "train";
            const int count = is_test ? spec.test : spec.train;
            const int width = std::max(2, static_cast<int>(std::to_string(std::max(count - 1, 0)).size()));
            for (int i = 0; i < count; ++i) {
                ShapeSpec ss = cs.shape;
                ss.seed = detail::mix_seed(spec.seed, (static_cast<std::uint64_t>(label) << 1) | is_test,
                                           static_cast<std::uint64_t>(i));
                PointCloud cloud = generate_shape(ss);
                char idx[16];
                std::snprintf(idx, sizeof idx, "%0*d", width, i);
                cloud.id = cs.name + "_" + split + "_" + idx;
                cloud.label = static_cast<int>(label);
                man.entries.push_back({cloud.id, cloud.id + ".xyz", static_cast<int>(label), split});
                save_cloud((fs::path(opts.out_dir) / (cloud.id + ".xyz")).string(), cloud, header);
                ++written;
            }
        }
        if (!opts.quiet) {
            std::printf("class %zu %s: %d train + %d test\n", label, cs.name.c_str(), spec.train,
                        spec.test);
        }
    }
    save_manifest((fs::path(opts.out_dir) / "manifest.txt").string(), man, header);
    write_text((fs::path(opts.out_dir) / "resolved_spec.ini").string(), echo);
    if (!opts.quiet) std::printf("wrote %d clouds + manifest to %s\n", written, opts.out_dir.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
    std::string data_path, out_path;
    std::string variant = "pointwise";
    TrainConfig train;
    bool quiet = false;
};

int run_train(const TrainOpts& opts, const ConfigSchema& schema) {
    if (opts.variant != "pointwise" && opts.variant != "edge") {
        throw InvalidArgument("train: variant must be 'pointwise' or 'edge'");
    }
    const DatasetManifest man = load_manifest(opts.data_path);
    const fs::path base = fs::path(opts.data_path).parent_path();

    std::vector<PointCloud> train_set, test_set;
    for (const ManifestEntry& e : man.entries) {
        (e.split == "train" ? train_set : test_set).push_back(load_sample(base, e));
    }
    if (train_set.empty()) throw InvalidArgument("train: manifest has no train split samples");

    const auto variant = opts.variant == "edge" ? PointClassifier::Variant::kEdge
                                                : PointClassifier::Variant::kPointwise;
    TrainLog log;
    const PointClassifier model = train_classifier(
        train_set, static_cast<int>(man.class_names.size()), variant, opts.train, &log);

    const double train_acc = classifier_accuracy(model, train_set);
    const double test_acc = test_set.empty() ? -1.0 : classifier_accuracy(model, test_set);

    if (const fs::path parent = fs::path(opts.out_path).parent_path(); !parent.empty()) {
        fs::create_directories(parent);
    }
    save_classifier(model, opts.out_path);

    const std::string echo = schema.render({"train"});
    std::string log_text;
    for (const std::string& l : header_lines("topoattack train", echo)) log_text += "# " + l + '\n';
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
        log_text += "epoch " + std::to_string(e) + " loss " + fmt_double(log.epoch_loss[e]) + '\n';
    }
    log_text += "train_accuracy " + fmt_double(train_acc) + '\n';
    if (test_acc >= 0.0) log_text += "test_accuracy " + fmt_double(test_acc) + '\n';
    write_text(opts.out_path + ".log", log_text);

    if (!opts.quiet) {
        std::printf("trained %s classifier on %zu samples: train_acc %.4f", opts.variant.c_str(),
                    train_set.size(), train_acc);
        if (test_acc >= 0.0) std::printf(" test_acc %.4f", test_acc);
        std::printf("\n");
    }
    return 0;
}

// ---------------------------------------------------------------------------
// attack

struct AttackOpts {
    std::string model_path, data_path, out_dir;
    AttackConfig atk;
    int knn = 16;
    std::string split = "test";
    int jobs = 0;
    int limit = 0;
    bool plot = false;
    bool quiet = false;
};

int run_attack_cmd(const AttackOpts& opts, const ConfigSchema& schema) {
    opts.atk.validate();
    const PointClassifier model = load_classifier(opts.model_path);
    const DatasetManifest man = load_manifest(opts.data_path);
    const fs::path base = fs::path(opts.data_path).parent_path();

    std::vector<ManifestEntry> entries = split_entries(man, opts.split);
    if (opts.limit > 0 && static_cast<int>(entries.size()) > opts.limit) {
        entries.resize(static_cast<std::size_t>(opts.limit));
    }
    if (entries.empty()) {
        throw EmptyCohort("attack: no samples with split '" + opts.split + "' in manifest");
    }

    const std::string echo = schema.render({"attack", "topo"});
    const auto header = header_lines("topoattack attack", echo);
    fs::create_directories(opts.out_dir);

    const bool use_ph = opts.atk.lambda2 != 0.0;
    if (!opts.quiet) {
        if (use_ph) std::printf("ph pipeline: active (lambda2 = %g)\n", opts.atk.lambda2);
        else std::printf("ph pipeline: skipped (lambda2 = 0)\n");
    }

    struct PerSample {
        AttackResult res;
        int clean_pred = -1;
        bool eligible = false;
    };
    std::vector<PerSample> results(entries.size());
    std::mutex log_mutex;
    int done = 0, eligible_done = 0, success_done = 0;

    run_pool(opts.jobs, entries.size(), [&](std::size_t i) {
        const ManifestEntry& e = entries[i];
        const PointCloud clean = load_sample(base, e);
        const CleanStats stats = make_clean_stats(clean, opts.knn);
        AttackConfig cfg = opts.atk;
        cfg.seed = detail::mix_seed(opts.atk.seed, fnv1a(e.id), 0x5eedULL);
        cfg.record_diagrams = opts.plot && use_ph;
        PerSample out;
        out.res = run_attack(model, clean, stats, cfg);
        out.eligible = !out.res.trivial;
        out.clean_pred = out.res.trivial ? out.res.predicted_label : e.label;
        results[i] = std::move(out);

        std::lock_guard<std::mutex> lock(log_mutex);
        ++done;
        const PerSample& r = results[i];
        if (r.eligible) {
            ++eligible_done;
            if (r.res.success) ++success_done;
        }
        if (!opts.quiet) {
            char asr_buf[32];
            if (eligible_done > 0) {
                std::snprintf(asr_buf, sizeof asr_buf, "%.1f", 100.0 * success_done / eligible_done);
            } else {
                std::snprintf(asr_buf, sizeof asr_buf, "n/a");
            }
            std::printf("[%d/%zu] %s success=%d iters=%d asr=%s\n", done, entries.size(),
                        e.id.c_str(), r.res.success ? 1 : 0, r.res.iterations_used, asr_buf);
        }
    });

    std::string records;
    for (const std::string& l : header) records += "# " + l + '\n';
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const ManifestEntry& e = entries[i];
        const PerSample& r = results[i];
        const std::string adv_name = e.id + "_adv.xyz";
        save_cloud((fs::path(opts.out_dir) / adv_name).string(), r.res.adv_cloud, header);
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "sample %s label %d clean_pred %d adv_pred %d eligible %d success %d "
                      "trivial %d restart %d iters %d ph_evals %d aborts %d file %s\n",
                      e.id.c_str(), e.label, r.clean_pred, r.res.predicted_label,
                      r.eligible ? 1 : 0, r.res.success ? 1 : 0, r.res.trivial ? 1 : 0,
                      r.res.restart_index, r.res.iterations_used, r.res.ph_evaluations,
                      r.res.degenerate_aborts, adv_name.c_str());
        records += buf;

        if (opts.plot) {
            std::string loss_text;
            for (const std::string& l : header) loss_text += "# " + l + '\n';
            loss_text += "# restart iter eta l_cls l_ph l_geom total pred\n";
            char row[256];
            for (const IterationRecord& t : r.res.trace) {
                std::snprintf(row, sizeof row, "%d %d %.17g %.17g %.17g %.17g %.17g %d\n",
                              t.restart, t.iter, t.eta, t.l_cls, t.l_ph, t.l_geom, t.total,
                              t.prediction);
                loss_text += row;
            }
            write_text((fs::path(opts.out_dir) / (e.id + "_loss.txt")).string(), loss_text);
            if (r.res.clean_diagram && r.res.adv_diagram) {
                std::string dgm_header;
                for (const std::string& l : header) dgm_header += "# " + l + '\n';
                write_text((fs::path(opts.out_dir) / (e.id + "_clean_dgm.txt")).string(),
                           dgm_header + diagram_text(*r.res.clean_diagram));
                write_text((fs::path(opts.out_dir) / (e.id + "_adv_dgm.txt")).string(),
                           dgm_header + diagram_text(*r.res.adv_diagram));
            }
        }
    }
    write_text((fs::path(opts.out_dir) / "records.txt").string(), records);
    write_text((fs::path(opts.out_dir) / "resolved_config.ini").string(), echo);

    if (!opts.quiet) {
        if (eligible_done > 0) {
            std::printf("attacked %zu samples: eligible %d success %d asr %s\n", entries.size(),
                        eligible_done, success_done,
                        fmt_double(100.0 * success_done / eligible_done).c_str());
        } else {
            std::printf("attacked %zu samples: none eligible\n", entries.size());
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
    std::string clean_path, adv_dir, model_path, transfer_path, out_dir;
    int knn = 16;
    int fps_start = 0;
    std::string split = "test";
    int jobs = 0;
    bool plot = false;
    bool quiet = false;
};

int run_eval(const EvalOpts& opts, const ConfigSchema& schema) {
    const PointClassifier model = load_classifier(opts.model_path);
    const DatasetManifest man = load_manifest(opts.clean_path);
    const fs::path base = fs::path(opts.clean_path).parent_path();

    std::vector<std::pair<PointCloud, PointCloud>> pairs;
    for (const ManifestEntry& e : split_entries(man, opts.split)) {
        const fs::path adv_path = fs::path(opts.adv_dir) / (e.id + "_adv.xyz");
        if (!fs::exists(adv_path)) continue;
        PointCloud adv = load_cloud(adv_path.string());
        adv.id = e.id;
        pairs.emplace_back(load_sample(base, e), std::move(adv));
    }
    if (pairs.empty()) {
        throw EmptyCohort("eval: no adversarial clouds matching manifest ids under '" +
                          opts.adv_dir + "'");
    }

    const std::string echo = schema.render({"eval"});
    const auto header = header_lines("topoattack eval", echo);
    fs::create_directories(opts.out_dir);

    std::vector<SampleRecord> recs(pairs.size());
    std::mutex log_mutex;
    int done = 0, eligible_done = 0, success_done = 0;
    run_pool(opts.jobs, pairs.size(), [&](std::size_t i) {
        recs[i] = sample_record(model, pairs[i].first, pairs[i].second, opts.knn, opts.fps_start);
        if (opts.plot) {
            std::string dgm_header;
            for (const std::string& l : header) dgm_header += "# " + l + '\n';
            write_text((fs::path(opts.out_dir) / (recs[i].id + "_clean_dgm.txt")).string(),
                       dgm_header + diagram_text(diagram_of(pairs[i].first.points, 0)));
            write_text((fs::path(opts.out_dir) / (recs[i].id + "_adv_dgm.txt")).string(),
                       dgm_header + diagram_text(diagram_of(pairs[i].second.points, 0)));
        }
        std::lock_guard<std::mutex> lock(log_mutex);
        ++done;
        if (recs[i].eligible) {
            ++eligible_done;
            if (recs[i].success) ++success_done;
        }
        if (!opts.quiet) {
            char asr_buf[32];
            if (eligible_done > 0) {
                std::snprintf(asr_buf, sizeof asr_buf, "%.1f", 100.0 * success_done / eligible_done);
            } else {
                std::snprintf(asr_buf, sizeof asr_buf, "n/a");
            }
            std::printf("[%d/%zu] %s success=%d asr=%s\n", done, pairs.size(),
                        recs[i].id.c_str(), recs[i].success ? 1 : 0, asr_buf);
        }
    });

    EvalReport report = aggregate_report(recs);
    report.config_echo = echo;

    double transfer_asr = -1.0;
    if (!opts.transfer_path.empty()) {
        const PointClassifier victim = load_classifier(opts.transfer_path);
        transfer_asr = transfer_eval(victim, pairs);
    }

    std::string records;
    for (const std::string& l : header) records += "# " + l + '\n';
    for (const SampleRecord& r : report.records) {
        char buf[512];
        std::snprintf(buf, sizeof buf,
                      "sample %s label %d clean_pred %d adv_pred %d eligible %d success %d "
                      "csd %.17g uniform %.17g chamfer %.17g hausdorff %.17g l2 %.17g "
                      "de0 %.17g de1 %.17g de2 %.17g\n",
                      r.id.c_str(), r.label, r.clean_pred, r.adv_pred, r.eligible ? 1 : 0,
                      r.success ? 1 : 0, r.csd, r.uniform, r.chamfer, r.hausdorff, r.l2,
                      r.entropy_delta[0], r.entropy_delta[1], r.entropy_delta[2]);
        records += buf;
    }
    write_text((fs::path(opts.out_dir) / "records.txt").string(), records);

    int eligible = 0;
    for (const SampleRecord& r : report.records) eligible += r.eligible ? 1 : 0;
    std::string summary;
    for (const std::string& l : header) summary += "# " + l + '\n';
    summary += "cohort " + std::to_string(report.records.size()) + " eligible " +
               std::to_string(eligible) + '\n';
    summary += "asr " + fmt_double(report.asr) + '\n';
    summary += "mean_csd " + fmt_double(report.mean_csd) + '\n';
    summary += "mean_uniform " + fmt_double(report.mean_uniform) + '\n';
    summary += "mean_chamfer " + fmt_double(report.mean_chamfer) + '\n';
    summary += "mean_hausdorff " + fmt_double(report.mean_hausdorff) + '\n';
    summary += "mean_l2 " + fmt_double(report.mean_l2) + '\n';
    summary += "mean_entropy_delta " + fmt_double(report.mean_entropy_delta[0]) + ' ' +
               fmt_double(report.mean_entropy_delta[1]) + ' ' +
               fmt_double(report.mean_entropy_delta[2]) + '\n';
    if (transfer_asr >= 0.0) summary += "transfer_asr " + fmt_double(transfer_asr) + '\n';
    write_text((fs::path(opts.out_dir) / "report.txt").string(), summary);
    write_text((fs::path(opts.out_dir) / "resolved_config.ini").string(), echo);

    if (!opts.quiet) {
        std::printf("asr %s over %d eligible of %zu\n", fmt_double(report.asr).c_str(), eligible,
                    report.records.size());
        if (transfer_asr >= 0.0) std::printf("transfer_asr %s\n", fmt_double(transfer_asr).c_str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// ph

struct PhOpts {
    std::string cloud_path, out_path;
    std::uint64_t perturb_seed = 0;
    bool grad_check = false;
    int grad_points = 40;
    bool quiet = false;
};

int run_ph(const PhOpts& opts) {
    const PointCloud cloud = load_cloud(opts.cloud_path);
    const Triangulation tri = delaunay3d(cloud.points, opts.perturb_seed);
    if (tri.jittered) {
        std::fprintf(stderr, "note: input needed symbolic jitter; values reflect the jittered copy\n");
    }
    const Filtration filt = alpha_filtration(tri);
    const PersistenceDiagram dgm = compute_persistence(filt);

    const std::string text = diagram_text(dgm);
    if (opts.out_path.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        std::string out = "# topoattack ph\n# perturb_seed = " +
                          std::to_string(opts.perturb_seed) + '\n';
        write_text(opts.out_path, out + text);
        if (!opts.quiet) {
            std::printf("wrote %zu pairs to %s\n", dgm.pairs.size(), opts.out_path.c_str());
        }
    }

    if (opts.grad_check) {
        const std::array<double, 3> w{0.3, 1.0, 1.0};
        const auto total_sq_lifetime = [&](const std::vector<Vec3>& pts) {
            const PersistenceDiagram d = diagram_of(pts, opts.perturb_seed);
            double s = 0.0;
            for (const PersistencePair& p : d.pairs) {
                if (!p.finite()) continue;
                s += w[static_cast<std::size_t>(p.dim)] * p.lifetime() * p.lifetime();
            }
            return s;
        };

        std::vector<std::pair<double, double>> upstream;
        upstream.reserve(dgm.pairs.size());
        for (const PersistencePair& p : dgm.pairs) {
            if (p.finite()) {
                const double u = 2.0 * w[static_cast<std::size_t>(p.dim)] * p.lifetime();
                upstream.emplace_back(-u, u);
            } else {
                upstream.emplace_back(0.0, 0.0);
            }
        }
        const GradField analytic = diagram_vjp(cloud.points, dgm, critical_map(filt, dgm), upstream);

        const double h = 1e-5;
        const std::size_t cap = std::min(cloud.points.size(),
                                         static_cast<std::size_t>(std::max(opts.grad_points, 1)));
        std::vector<Vec3> pts = cloud.points;
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < cap; ++i) {
            Vec3 fd;
            for (int c = 0; c < 3; ++c) {
                const double saved = pts[i][c];
                pts[i][c] = saved + h;
                const double up = total_sq_lifetime(pts);
                pts[i][c] = saved - h;
                const double dn = total_sq_lifetime(pts);
                pts[i][c] = saved;
                fd[c] = (up - dn) / (2.0 * h);
            }
            num = std::max(num, (analytic.g[i] - fd).norm());
            den = std::max(den, fd.norm());
        }
        const double rel = num / std::max(den, 1e-12);
        std::printf("grad_check h %g points %zu max_rel_err %.6e\n", h, cap, rel);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    GenOpts gen;
    TrainOpts tr;
    AttackOpts atk;
    EvalOpts ev;
    PhOpts ph;

    ConfigSchema schema;
    schema.sections = {
        {"attack",
         {bind_double("epsilon", &atk.atk.epsilon), bind_int("iters", &atk.atk.T),
          bind_int("restarts", &atk.atk.R), bind_double("eta0", &atk.atk.eta0),
          bind_double("decay", &atk.atk.decay), bind_int("decay_period", &atk.atk.decay_period),
          bind_double("lambda1", &atk.atk.lambda1), bind_double("lambda2", &atk.atk.lambda2),
          bind_double("lambda3", &atk.atk.lambda3), bind_double("kappa", &atk.atk.kappa),
          bind_int("patience", &atk.atk.patience), bind_int("stability", &atk.atk.stability_S),
          bind_u64("seed", &atk.atk.seed), bind_u64("embed_seed", &atk.atk.embed_seed),
          bind_int("knn", &atk.knn), bind_str("split", &atk.split),
          bind_int("limit", &atk.limit)}},
        {"topo",
         {bind_double("alpha", &atk.atk.topo.alpha), bind_double("beta", &atk.atk.topo.beta),
          bind_double("w0", &atk.atk.topo.w[0]), bind_double("w1", &atk.atk.topo.w[1]),
          bind_double("w2", &atk.atk.topo.w[2]), bind_int("top_k", &atk.atk.topo.top_k)}},
        {"train",
         {bind_str("variant", &tr.variant), bind_int("epochs", &tr.train.epochs),
          bind_int("batch", &tr.train.batch_size), bind_double("lr", &tr.train.lr),
          bind_str("optimizer", &tr.train.optimizer), bind_double("momentum", &tr.train.momentum),
          bind_u64("seed", &tr.train.seed)}},
        {"eval",
         {bind_int("knn", &ev.knn), bind_int("fps_start", &ev.fps_start),
          bind_str("split", &ev.split)}},
    };

    CLI::App app{"topology-driven imperceptible adversarial attacks on point clouds"};
    app.require_subcommand(1);
    std::string config_dummy;

    CLI::App* g = app.add_subcommand("gen-data", "generate a synthetic labeled dataset");
    g->add_option("--spec", gen.spec_path, "dataset spec file ([dataset] + [class ...] sections)")
        ->required();
    g->add_option("--out", gen.out_dir, "output directory")->required();
    g->add_flag("--quiet", gen.quiet, "suppress progress output");

    CLI::App* t = app.add_subcommand("train", "train a victim classifier");
    t->add_option("--data", tr.data_path, "dataset manifest")->required();
    t->add_option("--variant", tr.variant, "pointwise|edge");
    t->add_option("--out", tr.out_path, "checkpoint path")->required();
    t->add_option("--epochs", tr.train.epochs, "training epochs");
    t->add_option("--batch", tr.train.batch_size, "minibatch size");
    t->add_option("--lr", tr.train.lr, "learning rate");
    t->add_option("--optimizer", tr.train.optimizer, "adam|sgd");
    t->add_option("--momentum", tr.train.momentum, "sgd momentum");
    t->add_option("--seed", tr.train.seed, "training seed");
    t->add_option("--config", config_dummy, "config file ([train] section)");
    t->add_flag("--quiet", tr.quiet, "suppress progress output");

    CLI::App* a = app.add_subcommand("attack", "run the attack over a manifest split");
    a->add_option("--model", atk.model_path, "victim checkpoint")->required();
    a->add_option("--data", atk.data_path, "dataset manifest")->required();
    a->add_option("--out", atk.out_dir, "output directory")->required();
    a->add_option("--config", config_dummy, "config file ([attack]/[topo] sections)");
    a->add_option("--eps,--epsilon", atk.atk.epsilon, "per-point perturbation budget");
    a->add_option("--iters", atk.atk.T, "iterations per trajectory");
    a->add_option("--restarts", atk.atk.R, "random restarts after the zero init");
    a->add_option("--eta0", atk.atk.eta0, "base step size");
    a->add_option("--decay", atk.atk.decay, "step decay factor");
    a->add_option("--decay-period", atk.atk.decay_period, "decay period (0 = T/3)");
    a->add_option("--lambda1", atk.atk.lambda1, "classification loss weight");
    a->add_option("--lambda2", atk.atk.lambda2, "topology loss weight");
    a->add_option("--lambda3", atk.atk.lambda3, "geometry loss weight");
    a->add_option("--kappa", atk.atk.kappa, "margin confidence");
    a->add_option("--patience", atk.atk.patience, "iterations before the creation phase");
    a->add_option("--stability", atk.atk.stability_S, "consecutive flips for success");
    a->add_option("--seed", atk.atk.seed, "attack seed");
    a->add_option("--embed-seed", atk.atk.embed_seed, "diagram embedding seed");
    a->add_option("--alpha", atk.atk.topo.alpha, "divergence loss weight");
    a->add_option("--beta", atk.atk.topo.beta, "directional loss weight");
    a->add_option("--w0", atk.atk.topo.w[0], "H0 weight");
    a->add_option("--w1", atk.atk.topo.w[1], "H1 weight");
    a->add_option("--w2", atk.atk.topo.w[2], "H2 weight");
    a->add_option("--topk", atk.atk.topo.top_k, "bars per dimension in the directional loss");
    a->add_option("--knn", atk.knn, "neighborhood size for geometry terms");
    a->add_option("--split", atk.split, "manifest split to attack");
    a->add_option("--jobs", atk.jobs, "worker pool width (0 = cores)");
    a->add_option("--limit", atk.limit, "cap on sample count (0 = all)");
    a->add_flag("--plot-data", atk.plot, "emit per-sample loss curves and diagrams");
    a->add_flag("--quiet", atk.quiet, "suppress progress output");

    CLI::App* e = app.add_subcommand("eval", "score adversarial clouds against a model");
    e->add_option("--clean", ev.clean_path, "clean dataset manifest")->required();
    e->add_option("--adv", ev.adv_dir, "directory of <id>_adv.xyz clouds")->required();
    e->add_option("--model", ev.model_path, "victim checkpoint")->required();
    e->add_option("--transfer", ev.transfer_path, "second checkpoint for transfer rate");
    e->add_option("--out", ev.out_dir, "output directory")->required();
    e->add_option("--config", config_dummy, "config file ([eval] section)");
    e->add_option("--knn", ev.knn, "neighborhood size for curvature");
    e->add_option("--fps-start", ev.fps_start, "first farthest-point seed index");
    e->add_option("--split", ev.split, "manifest split to evaluate");
    e->add_option("--jobs", ev.jobs, "worker pool width (0 = cores)");
    e->add_flag("--plot-data", ev.plot, "emit per-sample persistence diagrams");
    e->add_flag("--quiet", ev.quiet, "suppress progress output");

    CLI::App* p = app.add_subcommand("ph", "persistence diagram of a point cloud");
    p->add_option("--cloud", ph.cloud_path, "xyz point cloud file")->required();
    p->add_option("--out", ph.out_path, "write the diagram here instead of stdout");
    p->add_option("--perturb-seed", ph.perturb_seed, "jitter seed for degenerate inputs");
    p->add_flag("--grad-check", ph.grad_check, "finite-difference check of diagram gradients");
    p->add_option("--grad-points", ph.grad_points, "points covered by the gradient check");
    p->add_flag("--quiet", ph.quiet, "suppress progress output");

    try {
        // The config file must land before flag parsing so flags win.
        std::string config_path;
        for (int i = 1; i < argc; ++i) {
            const std::string arg = argv[i];
            if (arg == "--config" && i + 1 < argc) config_path = argv[i + 1];
            else if (arg.rfind("--config=", 0) == 0) config_path = arg.substr(9);
        }
        if (config_path.empty()) {
            if (const char* env = std::getenv("TOPOATTACK_CONFIG")) config_path = env;
        }
        if (!config_path.empty()) schema.apply(read_config_file(config_path));

        app.parse(argc, argv);

        if (g->parsed()) return run_gen(gen);
        if (t->parsed()) return run_train(tr, schema);
        if (a->parsed()) return run_attack_cmd(atk, schema);
        if (e->parsed()) return run_eval(ev, schema);
        if (p->parsed()) return run_ph(ph);
        return 2;
    } catch (const CLI::ParseError& err) {
        if (err.get_exit_code() == 0) return app.exit(err);
        app.exit(err);
        return 2;
    } catch (const ParseError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const InvalidArgument& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const EmptyCohort& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 3;
    } catch (const DegenerateInput& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 4;
    } catch (const DegenerateSimplex& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 4;
    } catch (const DegenerateNeighborhood& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 4;
    } catch (const Error& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
}
