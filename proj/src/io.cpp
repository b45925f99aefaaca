#include "hwsched/io.hpp"

#include "hwsched/error.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

namespace hwsched {

using nlohmann::json;

namespace {

double number(const json& obj, const char* key, double fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number()) throw InputError(where + "." + key + " must be a number");
    return v.get<double>();
}

double required_number(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw InputError(where + " is missing \"" + key + "\"");
    return number(obj, key, 0.0, where);
}

std::size_t index(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj.at(key).is_number_integer() || obj.at(key).get<long long>() < 0)
        throw InputError(where + "." + key + " must be a nonnegative integer");
    return obj.at(key).get<std::size_t>();
}

std::vector<double> number_list(const json& obj, const char* key, std::size_t n, const std::string& where) {
    if (!obj.contains(key)) return std::vector<double>(n, 0.0);
    const auto& v = obj.at(key);
    if (!v.is_array()) throw InputError(where + "." + key + " must be an array");
    std::vector<double> out;
    for (const auto& a : v) {
        if (!a.is_number()) throw InputError(where + "." + key + " must hold numbers");
        out.push_back(a.get<double>());
    }
    return out;
}

const json& array_field(const json& doc, const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_array()) throw InputError(std::string("model needs an array \"") + key + "\"");
    return doc.at(key);
}

json model_json(const TreeModel& m) {
    json doc;
    doc["classes"] = json::array();
    for (std::size_t i = 0; i < m.classes; ++i)
        doc["classes"].push_back({{"theta", m.theta[i]},
                                  {"ell", m.ell[i]},
                                  {"r", m.r[i]},
                                  {"lambda", m.lambda[i]},
                                  {"x_star", m.x_star[i]}});
    doc["stations"] = json::array();
    for (std::size_t j = 0; j < m.stations; ++j) doc["stations"].push_back({{"nu", m.nu[j]}});
    doc["edges"] = json::array();
    for (const auto& e : m.edges)
        doc["edges"].push_back({{"class", e.cls},
                                {"station", e.station},
                                {"mu", m.mu(e.cls, e.station)},
                                {"psi_star", m.psi_star(e.cls, e.station)}});
    doc["gamma"] = m.gamma;
    return doc;
}

json grid_json(const Grid& g) {
    json axes = json::array();
    for (const auto& a : g.axes()) axes.push_back({{"lower", a.lower}, {"upper", a.upper}, {"count", a.count}});
    return axes;
}

Grid grid_from_json(const json& axes) {
    if (!axes.is_array()) throw InputError("field header needs a grid array");
    std::vector<GridAxis> out;
    for (const auto& a : axes)
        out.push_back({required_number(a, "lower", "grid"), required_number(a, "upper", "grid"), index(a, "count", "grid")});
    return Grid(out);
}

void write_payload(const std::filesystem::path& path, const std::vector<double>& data) {
    static_assert(std::endian::native == std::endian::little, "payload writer assumes a little-endian host");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
}

std::vector<double> read_payload(const std::filesystem::path& path, std::size_t count) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot read " + path.string());
    std::vector<double> data(count);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (is.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
        throw InputError("payload " + path.string() + " is shorter than the header says");
    is.peek();
    if (!is.eof()) throw InputError("payload " + path.string() + " is longer than the header says");
    return data;
}

void write_header(const std::filesystem::path& stem, json header) {
    header["payload"] = stem.filename().string() + ".bin";
    header["encoding"] = "f64le";
    header["layout"] = "row-major, first grid axis slowest";
    std::ofstream os(stem.string() + ".json");
    if (!os) throw InputError("cannot write " + stem.string() + ".json");
    os << header.dump(2) << '\n';
}

json read_header(const std::filesystem::path& header, const char* kind) {
    std::ifstream is(header);
    if (!is) throw InputError("cannot read " + header.string());
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::exception& e) {
        throw InputError("field header " + header.string() + " is not valid JSON: " + e.what());
    }
    if (doc.value("kind", "") != kind) throw InputError(header.string() + " is not a " + kind + " field");
    if (doc.value("encoding", "") != "f64le") throw InputError("unsupported payload encoding");
    return doc;
}

void header_row(std::ostream& os, const char* prefix, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) os << ',' << prefix << k;
}

void row(std::ostream& os, const std::vector<double>& data, std::size_t k, std::size_t width) {
    for (std::size_t c = 0; c < width; ++c) os << ',' << format_double(data[k * width + c]);
}

template <class Path>
void path_csv(std::ostream& os, const Path& p) {
    os << 't';
    header_row(os, "x_", p.classes);
    header_row(os, "y_", p.classes);
    header_row(os, "z_", p.stations);
    os << '\n';
    const auto rows = p.classes == 0 ? 0 : p.x.size() / p.classes;
    for (std::size_t k = 0; k < rows; ++k) {
        os << format_double(p.dt * static_cast<double>(k));
        row(os, p.x, k, p.classes);
        row(os, p.y, k, p.classes);
        row(os, p.z, k, p.stations);
        os << '\n';
    }
}

}  // namespace

ModelFile parse_model(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InputError(std::string("model is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw InputError("model must be a JSON object");
    const auto& cls = array_field(doc, "classes");
    const auto& sts = array_field(doc, "stations");
    const auto& eds = array_field(doc, "edges");

    ModelFile out;
    auto& m = out.model;
    m.classes = cls.size();
    m.stations = sts.size();
    m.mu = RateMatrix(m.classes, m.stations);
    m.psi_star = RateMatrix(m.classes, m.stations);
    for (std::size_t i = 0; i < m.classes; ++i) {
        const std::string where = "classes[" + std::to_string(i) + "]";
        if (!cls[i].is_object()) throw InputError(where + " must be an object");
        m.theta.push_back(number(cls[i], "theta", 0.0, where));
        m.ell.push_back(number(cls[i], "ell", 0.0, where));
        m.r.push_back(number(cls[i], "r", 1.0, where));
        m.lambda.push_back(required_number(cls[i], "lambda", where));
        m.x_star.push_back(required_number(cls[i], "x_star", where));
    }
    for (std::size_t j = 0; j < m.stations; ++j) {
        const std::string where = "stations[" + std::to_string(j) + "]";
        if (!sts[j].is_object()) throw InputError(where + " must be an object");
        m.nu.push_back(required_number(sts[j], "nu", where));
    }
    for (std::size_t k = 0; k < eds.size(); ++k) {
        const std::string where = "edges[" + std::to_string(k) + "]";
        if (!eds[k].is_object()) throw InputError(where + " must be an object");
        const auto i = index(eds[k], "class", where);
        const auto j = index(eds[k], "station", where);
        if (i >= m.classes || j >= m.stations) throw InputError(where + " refers to a missing node");
        m.edges.push_back({i, j});
        m.mu(i, j) = required_number(eds[k], "mu", where);
        m.psi_star(i, j) = required_number(eds[k], "psi_star", where);
    }
    m.gamma = number(doc, "gamma", 1.0, "model");

    if (doc.contains("cost")) {
        const auto& c = doc.at("cost");
        if (!c.is_object()) throw InputError("cost must be an object");
        RunningCostSpec cost;
        cost.queue_weights = number_list(c, "queue_weights", m.classes, "cost");
        cost.idle_weights = number_list(c, "idle_weights", m.stations, "cost");
        cost.queue_exponent = number(c, "queue_exponent", 1.0, "cost");
        cost.idle_exponent = number(c, "idle_exponent", 1.0, "cost");
        cost.norm_weight = number(c, "norm_weight", 0.0, "cost");
        cost.norm_exponent = number(c, "norm_exponent", 1.0, "cost");
        cost.constant = number(c, "constant", 0.0, "cost");
        out.cost = cost;
    }
    return out;
}

ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot read model file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_model(ss.str());
}

std::string model_to_json(const TreeModel& model, const RunningCostSpec* cost) {
    auto doc = model_json(model);
    if (cost) {
        doc["cost"] = {{"queue_weights", cost->queue_weights}, {"idle_weights", cost->idle_weights},
                       {"queue_exponent", cost->queue_exponent}, {"idle_exponent", cost->idle_exponent},
                       {"norm_weight", cost->norm_weight},     {"norm_exponent", cost->norm_exponent},
                       {"constant", cost->constant}};
    }
    return doc.dump(2);
}

std::string model_hash(const TreeModel& model) {
    const auto text = model_json(model).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string sequences_to_json(const OperatorSequences& seqs) {
    json doc;
    doc["root"] = seqs.root;
    doc["A"] = seqs.A;
    doc["A_prime"] = seqs.A_prime;
    doc["B"] = seqs.B;
    return doc.dump(2);
}

void save_value_field(const std::filesystem::path& stem, const ValueField& field, const TreeModel& model) {
    if (field.values.size() != field.grid.size()) throw InputError("value field size does not match its grid");
    write_payload(stem.string() + ".bin", field.values);
    write_header(stem, {{"kind", "value"},
                        {"grid", grid_json(field.grid)},
                        {"model_hash", model_hash(model)},
                        {"classes", model.classes},
                        {"stations", model.stations}});
}

void save_policy_field(const std::filesystem::path& stem, const PolicyField& field, const TreeModel& model) {
    if (field.controls.size() != field.grid.size()) throw InputError("policy field size does not match its grid");
    std::vector<double> data;
    data.reserve(field.grid.size() * (field.classes + field.stations));
    for (const auto& c : field.controls) {
        data.insert(data.end(), c.u.begin(), c.u.end());
        data.insert(data.end(), c.v.begin(), c.v.end());
    }
    write_payload(stem.string() + ".bin", data);
    write_header(stem, {{"kind", "policy"},
                        {"grid", grid_json(field.grid)},
                        {"model_hash", model_hash(model)},
                        {"classes", field.classes},
                        {"stations", field.stations}});
}

LoadedValue load_value_field(const std::filesystem::path& header) {
    const auto doc = read_header(header, "value");
    LoadedValue out;
    out.field.grid = grid_from_json(doc.at("grid"));
    out.model_hash = doc.value("model_hash", "");
    out.field.values = read_payload(header.parent_path() / doc.at("payload").get<std::string>(), out.field.grid.size());
    return out;
}

LoadedPolicy load_policy_field(const std::filesystem::path& header) {
    const auto doc = read_header(header, "policy");
    LoadedPolicy out;
    auto& f = out.field;
    f.grid = grid_from_json(doc.at("grid"));
    f.classes = index(doc, "classes", "policy header");
    f.stations = index(doc, "stations", "policy header");
    out.model_hash = doc.value("model_hash", "");
    const auto width = f.classes + f.stations;
    const auto data = read_payload(header.parent_path() / doc.at("payload").get<std::string>(), f.grid.size() * width);
    f.controls.resize(f.grid.size());
    for (std::size_t k = 0; k < f.grid.size(); ++k) {
        auto& c = f.controls[k];
        const auto* p = data.data() + k * width;
        c.u.assign(p, p + f.classes);
        c.v.assign(p + f.classes, p + width);
        if (!c.in_simplex(1e-9)) throw InputError("policy payload holds a control outside the simplex product");
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_path_csv(std::ostream& os, const SimPath& path) { path_csv(os, path); }
void write_path_csv(std::ostream& os, const CtmcPath& path) { path_csv(os, path); }

void write_det_csv(std::ostream& os, const DetTrajectory& tr) {
    os << 't';
    header_row(os, "w_", tr.w.size());
    header_row(os, "x_", tr.x.size());
    header_row(os, "y_", tr.y.size());
    header_row(os, "z_", tr.z.size());
    for (const auto& e : tr.edges) os << ",psi_" << e.cls << '_' << e.station;
    os << '\n';
    for (std::size_t k = 0; k < tr.size(); ++k) {
        os << format_double(tr.dt * static_cast<double>(k));
        for (const auto* group : {&tr.w, &tr.x, &tr.y, &tr.z, &tr.psi})
            for (const auto& s : *group) os << ',' << format_double(s[k]);
        os << '\n';
    }
}

void write_moment_csv(std::ostream& os, const MomentCurve& curve) {
    os << "t,mean,std_error\n";
    for (std::size_t k = 0; k < curve.times.size(); ++k)
        os << format_double(curve.times[k]) << ',' << format_double(curve.mean[k]) << ','
           << format_double(curve.std_error[k]) << '\n';
}

void write_comparison_csv(std::ostream& os, const std::vector<MomentDiscrepancy>& rows) {
    os << "t,class,mean_a,mean_b,mean_diff,mean_se,var_a,var_b,var_diff,var_se\n";
    for (const auto& r : rows) {
        os << format_double(r.time) << ',' << r.cls;
        for (double v : {r.mean_a, r.mean_b, r.mean_diff, r.mean_se, r.var_a, r.var_b, r.var_diff, r.var_se})
            os << ',' << format_double(v);
        os << '\n';
    }
}

void write_counterexample_csv(std::ostream& os, const CounterexampleReport& rep) {
    os << "t,x_1,x_2,psi_1A,psi_2A,psi_1B,psi_2B\n";
    for (std::size_t k = 0; k < rep.x1.size(); ++k) {
        os << format_double(rep.x1.time(k));
        for (const auto* s : {&rep.x1, &rep.x2, &rep.psi_1A, &rep.psi_2A, &rep.psi_1B, &rep.psi_2B})
            os << ',' << format_double((*s)[k]);
        os << '\n';
    }
}

}  // namespace hwsched
