#include "cfair/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cfair/error.hpp"

namespace cfair {

namespace {

std::vector<double> number_array(const Json& arr, const std::string& what) {
    if (!arr.is_array()) throw Error(ErrorCode::Parse, what + " must be an array");
    std::vector<double> out;
    for (const auto& v : arr) {
        if (!v.is_number()) throw Error(ErrorCode::Parse, what + " must contain numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

double number_or(const Json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number()) throw Error(ErrorCode::Parse, std::string("'") + key + "' must be a number");
    return obj.at(key).get<double>();
}

Family family_from_json(const std::string& name, const Json& params) {
    if (name == "linear_gaussian") {
        return LinearGaussian{number_or(params, "intercept", 0.0),
                              number_array(params.value("weights", Json::array()), "weights"),
                              number_or(params, "noise_std", 0.0)};
    }
    if (name == "poisson_log") {
        return PoissonLogLink{number_or(params, "intercept", 0.0),
                              number_array(params.value("weights", Json::array()), "weights")};
    }
    if (name == "bernoulli_logit") {
        return BernoulliLogit{number_or(params, "intercept", 0.0),
                              number_array(params.value("weights", Json::array()), "weights")};
    }
    if (name == "table") {
        DeterministicTable table;
        for (const auto& entry : params.at("entries")) {
            table.entries[number_array(entry.at("parents"), "table parents")] = entry.at("value").get<double>();
        }
        return table;
    }
    throw Error(ErrorCode::Parse, "unknown equation family '" + name + "'");
}

Json family_params(const Family& family) {
    Json params = Json::object();
    std::visit(
        [&](const auto& fam) {
            using T = std::decay_t<decltype(fam)>;
            if constexpr (std::is_same_v<T, DeterministicTable>) {
                Json entries = Json::array();
                for (const auto& [key, value] : fam.entries) entries.push_back({{"parents", key}, {"value", value}});
                params["entries"] = entries;
            } else {
                params["intercept"] = fam.intercept;
                params["weights"] = fam.weights;
                if constexpr (std::is_same_v<T, LinearGaussian>) params["noise_std"] = fam.noise_std;
            }
        },
        family);
    return params;
}

}  // namespace

CausalModel model_from_json(const Json& doc) {
    try {
        CausalModel model;
        for (const auto& v : doc.at("variables")) {
            Variable var;
            var.name = v.at("name").get<std::string>();
            var.role = role_from_string(v.at("role").get<std::string>());
            const Json& dom = v.contains("domain") ? v.at("domain") : Json("real");
            if (dom.is_string()) {
                if (dom.get<std::string>() != "real") throw Error(ErrorCode::Parse, "domain must be \"real\" or an array");
            } else {
                var.domain = Domain::of(number_array(dom, "domain of '" + var.name + "'"));
            }
            model.variables.push_back(std::move(var));
        }
        const Json equations = doc.value("equations", Json::array());
        for (const auto& e : equations) {
            StructuralEquation eq;
            eq.child = e.at("child").get<std::string>();
            eq.parents = e.value("parents", std::vector<std::string>{});
            eq.family = family_from_json(e.at("family").get<std::string>(), e.value("params", Json::object()));
            eq.noise_source = e.value("noise_source", std::string{});
            model.equations.push_back(std::move(eq));
        }
        const Json priors = doc.value("priors", Json::object());
        for (const auto& [name, p] : priors.items()) {
            const std::string dist = p.at("dist").get<std::string>();
            if (dist == "normal") {
                model.priors[name] = NormalPrior{number_or(p, "mean", 0.0), number_or(p, "std", 1.0)};
            } else if (dist == "categorical") {
                model.priors[name] = CategoricalPrior{number_array(p.at("values"), "prior values"),
                                                      number_array(p.at("probs"), "prior probs")};
            } else {
                throw Error(ErrorCode::Parse, "unknown prior dist '" + dist + "'");
            }
        }
        // Background variables default to a standard normal prior.
        for (const auto& v : model.variables) {
            if (v.role == Role::Background && !model.priors.count(v.name)) model.priors[v.name] = NormalPrior{};
        }
        return model;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("malformed model document: ") + e.what());
    }
}

Json model_to_json(const CausalModel& model) {
    Json doc;
    doc["variables"] = Json::array();
    for (const auto& v : model.variables) {
        Json entry{{"name", v.name}, {"role", std::string(to_string(v.role))}};
        entry["domain"] = v.domain.finite() ? Json(v.domain.values) : Json("real");
        doc["variables"].push_back(entry);
    }
    doc["equations"] = Json::array();
    for (const auto& eq : model.equations) {
        Json entry{{"child", eq.child},
                   {"parents", eq.parents},
                   {"family", std::string(family_name(eq.family))},
                   {"params", family_params(eq.family)}};
        if (!eq.noise_source.empty()) entry["noise_source"] = eq.noise_source;
        doc["equations"].push_back(entry);
    }
    doc["priors"] = Json::object();
    for (const auto& [name, prior] : model.priors) {
        if (auto* np = std::get_if<NormalPrior>(&prior)) {
            doc["priors"][name] = {{"dist", "normal"}, {"mean", np->mean}, {"std", np->std}};
        } else {
            const auto& cp = std::get<CategoricalPrior>(prior);
            doc["priors"][name] = {{"dist", "categorical"}, {"values", cp.values}, {"probs", cp.probs}};
        }
    }
    return doc;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out << text;
}

Json read_json(const std::filesystem::path& path) {
    try {
        return Json::parse(read_text(path));
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

CausalModel load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

void save_model(const std::filesystem::path& path, const CausalModel& model, const Json& extra) {
    Json doc = model_to_json(model);
    for (const auto& [key, value] : extra.items()) doc[key] = value;
    write_json(path, doc);
}

std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    if (quoted) throw Error(ErrorCode::Parse, "unterminated quote on line " + std::to_string(line_no));
    fields.push_back(std::move(field));
    return fields;
}

std::string quote_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

Dataset parse_csv(const std::string& text) {
    Dataset data;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_record(line, line_no);
        if (header) {
            data.columns = fields;
            data.data.assign(fields.size(), {});
            header = false;
            continue;
        }
        if (fields.size() != data.columns.size()) {
            throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                              " fields, expected " + std::to_string(data.columns.size()));
        }
        for (std::size_t c = 0; c < fields.size(); ++c) {
            double v = 0.0;
            const auto& f = fields[c];
            auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v)) {
                throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": non-numeric or missing value '" +
                                                  f + "' in column '" + data.columns[c] + "'");
            }
            data.data[c].push_back(v);
        }
    }
    if (header) throw Error(ErrorCode::Parse, "empty CSV document");
    return data;
}

std::string format_csv(const Dataset& data) {
    std::string out;
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
        if (c) out += ',';
        out += quote_field(data.columns[c]);
    }
    out += "\r\n";
    const std::size_t n = data.rows();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < data.columns.size(); ++c) {
            if (c) out += ',';
            out += format_double(data.data[c][r]);
        }
        out += "\r\n";
    }
    return out;
}

Dataset read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

void write_csv(const std::filesystem::path& path, const Dataset& data) { write_text(path, format_csv(data)); }

}  // namespace cfair
