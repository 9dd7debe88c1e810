#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "expabs/matrix.hpp"

namespace expabs {

enum class TargetKind { classification, regression };

// Plain-text key = value schema shipped next to each dataset file.
// Recognized keys: name, delimiter (comma|semicolon|tab|whitespace),
// has_header, target_columns, ignore_columns, discrete_columns, target_kind,
// classes, hidden_nodes. Column indices are 0-based. When `classes` is given,
// rows with other labels are dropped (and counted); otherwise the class list
// is inferred from the data in sorted order.
struct SchemaConfig {
    std::string name;
    char delimiter = ',';           // 0 means any-whitespace
    bool has_header = false;
    std::vector<std::size_t> target_columns;
    std::vector<std::size_t> ignore_columns;
    std::vector<std::size_t> discrete_columns;
    TargetKind target_kind = TargetKind::classification;
    std::vector<std::string> classes;
    int hidden_nodes = 0;  // 0 = derive as inputs + outputs capped at 15

    bool valid() const {
        if (target_columns.empty()) return false;
        if (target_kind == TargetKind::classification && target_columns.size() != 1) return false;
        return true;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

inline bool parse_double(const std::string& s, double& v) {
    try {
        std::size_t pos = 0;
        v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        return pos == s.size() && std::isfinite(v);
    } catch (...) {
        return false;
    }
}

inline std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> out;
    if (delim == 0) {  // any run of whitespace
        std::stringstream ss(line);
        std::string tok;
        while (ss >> tok) out.push_back(tok);
        return out;
    }
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, delim)) out.push_back(trim(cur));
    return out;
}

}  // namespace detail

inline SchemaConfig parse_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open schema file: " + path);
    SchemaConfig cfg;
    std::string line;
    auto to_indices = [](const std::string& v) {
        std::vector<std::size_t> idx;
        for (const std::string& tok : detail::split_list(v)) idx.push_back(std::stoul(tok));
        return idx;
    };
    while (std::getline(in, line)) {
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad schema line: " + line);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key == "name") cfg.name = val;
        else if (key == "delimiter") {
            if (val == "comma") cfg.delimiter = ',';
            else if (val == "semicolon") cfg.delimiter = ';';
            else if (val == "tab") cfg.delimiter = '\t';
            else if (val == "whitespace") cfg.delimiter = 0;
            else throw std::runtime_error("unknown delimiter: " + val);
        } else if (key == "has_header") cfg.has_header = (val == "true" || val == "1");
        else if (key == "target_columns") cfg.target_columns = to_indices(val);
        else if (key == "ignore_columns") cfg.ignore_columns = to_indices(val);
        else if (key == "discrete_columns") cfg.discrete_columns = to_indices(val);
        else if (key == "target_kind") {
            if (val == "classification") cfg.target_kind = TargetKind::classification;
            else if (val == "regression") cfg.target_kind = TargetKind::regression;
            else throw std::runtime_error("unknown target_kind: " + val);
        } else if (key == "classes") cfg.classes = detail::split_list(val);
        else if (key == "hidden_nodes") cfg.hidden_nodes = std::stoi(val);
        else throw std::runtime_error("unknown schema key: " + key);
    }
    if (!cfg.valid()) throw std::runtime_error("invalid schema: " + path);
    return cfg;
}

// Typed rows straight from the file; discrete input columns keep their raw
// strings until encoding.
struct RawTable {
    std::vector<std::vector<std::string>> rows;
    std::size_t dropped_rows = 0;
};

inline RawTable load_delimited(const std::string& path, const SchemaConfig& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    std::size_t max_col = 0;
    for (std::size_t c : schema.target_columns) max_col = std::max(max_col, c);
    for (std::size_t c : schema.ignore_columns) max_col = std::max(max_col, c);

    RawTable table;
    std::string line;
    bool first = true;
    std::size_t width = 0;  // all kept rows must match the first row's width
    while (std::getline(in, line)) {
        if (first && schema.has_header) {
            first = false;
            continue;
        }
        first = false;
        if (detail::trim(line).empty()) continue;
        std::vector<std::string> fields = detail::split_fields(line, schema.delimiter);
        bool ok = fields.size() > max_col && (width == 0 || fields.size() == width);
        for (const std::string& f : fields)
            if (f.empty()) ok = false;
        if (!ok) {
            ++table.dropped_rows;
            continue;
        }
        if (width == 0) width = fields.size();
        table.rows.push_back(std::move(fields));
    }
    if (table.rows.empty()) throw std::runtime_error("no valid rows in " + path);
    return table;
}

// Row i gets a 1 at its class index.
inline Matrix one_hot(const std::vector<std::string>& labels,
                      const std::vector<std::string>& classes) {
    Matrix t(labels.size(), classes.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = std::find(classes.begin(), classes.end(), labels[i]);
        if (it == classes.end()) throw std::invalid_argument("one_hot: unknown label " + labels[i]);
        t(i, static_cast<std::size_t>(it - classes.begin())) = 1.0;
    }
    return t;
}

// Numeric table after encoding, before normalization.
struct EncodedData {
    Matrix x;                              // P x N0
    Matrix t;                              // P x N_L (one-hot or raw regression)
    std::vector<int> class_index;          // classification only
    std::vector<std::string> class_names;  // classification only
    TargetKind kind = TargetKind::classification;
    std::size_t dropped_rows = 0;
    std::size_t dropped_unknown_label = 0;
};

inline EncodedData encode(const RawTable& table, const SchemaConfig& schema) {
    const std::size_t ncols = table.rows.front().size();
    auto contains = [](const std::vector<std::size_t>& v, std::size_t c) {
        return std::find(v.begin(), v.end(), c) != v.end();
    };
    std::vector<std::size_t> input_cols;
    for (std::size_t c = 0; c < ncols; ++c)
        if (!contains(schema.target_columns, c) && !contains(schema.ignore_columns, c))
            input_cols.push_back(c);
    if (input_cols.empty()) throw std::runtime_error("encode: no input columns");

    EncodedData out;
    out.kind = schema.target_kind;
    out.dropped_rows = table.dropped_rows;

    // label-encode declared discrete columns over sorted observed values
    std::map<std::size_t, std::map<std::string, double>> codes;
    for (std::size_t c : schema.discrete_columns) {
        std::vector<std::string> vals;
        for (const auto& row : table.rows)
            if (c < row.size()) vals.push_back(row[c]);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        std::map<std::string, double> m;
        for (std::size_t i = 0; i < vals.size(); ++i) m[vals[i]] = static_cast<double>(i);
        codes[c] = std::move(m);
    }

    std::vector<std::string> labels;
    std::vector<std::vector<double>> xrows;
    std::vector<std::vector<double>> trows;
    std::vector<std::string> class_list = schema.classes;
    if (schema.target_kind == TargetKind::classification && class_list.empty()) {
        std::vector<std::string> seen;
        for (const auto& row : table.rows) seen.push_back(row[schema.target_columns[0]]);
        std::sort(seen.begin(), seen.end());
        seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
        class_list = std::move(seen);
    }

    for (const auto& row : table.rows) {
        std::vector<double> xr;
        bool ok = true;
        for (std::size_t c : input_cols) {
            auto it = codes.find(c);
            if (it != codes.end()) {
                xr.push_back(it->second.at(row[c]));
            } else {
                double v;
                if (!detail::parse_double(row[c], v)) {
                    ok = false;
                    break;
                }
                xr.push_back(v);
            }
        }
        if (!ok) {
            ++out.dropped_rows;
            continue;
        }
        if (schema.target_kind == TargetKind::classification) {
            const std::string& label = row[schema.target_columns[0]];
            auto it = std::find(class_list.begin(), class_list.end(), label);
            if (it == class_list.end()) {
                ++out.dropped_unknown_label;
                continue;
            }
            labels.push_back(label);
            xrows.push_back(std::move(xr));
        } else {
            std::vector<double> tr;
            for (std::size_t c : schema.target_columns) {
                double v;
                if (!detail::parse_double(row[c], v)) {
                    ok = false;
                    break;
                }
                tr.push_back(v);
            }
            if (!ok) {
                ++out.dropped_rows;
                continue;
            }
            xrows.push_back(std::move(xr));
            trows.push_back(std::move(tr));
        }
    }
    if (xrows.empty()) throw std::runtime_error("encode: zero usable rows");

    out.x = Matrix(xrows.size(), xrows.front().size());
    for (std::size_t i = 0; i < xrows.size(); ++i)
        std::copy(xrows[i].begin(), xrows[i].end(), out.x.row(i).begin());

    if (schema.target_kind == TargetKind::classification) {
        out.class_names = class_list;
        out.t = one_hot(labels, class_list);
        out.class_index.resize(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            auto it = std::find(class_list.begin(), class_list.end(), labels[i]);
            out.class_index[i] = static_cast<int>(it - class_list.begin());
        }
    } else {
        out.t = Matrix(trows.size(), trows.front().size());
        for (std::size_t i = 0; i < trows.size(); ++i)
            std::copy(trows[i].begin(), trows[i].end(), out.t.row(i).begin());
    }
    return out;
}

// Index lists for train/validation/test; disjoint, covering, deterministic.
struct Split {
    std::vector<std::size_t> train, validation, test;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

namespace detail {

// Largest-remainder apportionment of n into len(frac) parts; ties go to the
// earlier part.
inline std::vector<std::size_t> apportion(std::size_t n, std::span<const double> frac) {
    std::vector<std::size_t> counts(frac.size(), 0);
    std::vector<double> rem(frac.size(), 0.0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < frac.size(); ++i) {
        const double ideal = frac[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(std::floor(ideal + 1e-12));
        rem[i] = ideal - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    while (assigned < n) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < frac.size(); ++i)
            if (rem[i] > rem[best] + 1e-12) best = i;
        ++counts[best];
        rem[best] = -1.0;
        ++assigned;
    }
    return counts;
}

}  // namespace detail

// Seeded shuffle split, stratified by class for classification. `fractions`
// must sum to 1; explicit `counts` (Adult) override fractions and are honored
// exactly.
inline Split split_dataset(std::size_t patterns, const std::vector<int>& class_index,
                           std::array<double, 3> fractions, std::uint64_t seed,
                           const std::array<std::size_t, 3>* counts = nullptr) {
    if (!counts) {
        double s = fractions[0] + fractions[1] + fractions[2];
        if (!(fractions[0] > 0 && fractions[1] > 0 && fractions[2] > 0) ||
            std::abs(s - 1.0) > 1e-9)
            throw std::invalid_argument("split_dataset: fractions must be positive and sum to 1");
    } else if (counts->at(0) + counts->at(1) + counts->at(2) != patterns) {
        throw std::invalid_argument("split_dataset: explicit counts must cover all patterns");
    }

    Split split;
    split.seed = seed;
    std::vector<std::size_t> order(patterns);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::array<std::size_t, 3> targets;
    if (counts) targets = *counts;
    else {
        auto t = detail::apportion(patterns, fractions);
        targets = {t[0], t[1], t[2]};
    }
    std::array<double, 3> frac;
    for (int s = 0; s < 3; ++s)
        frac[s] = static_cast<double>(targets[s]) / static_cast<double>(patterns);

    std::array<std::vector<std::size_t>*, 3> parts = {&split.train, &split.validation,
                                                      &split.test};
    const bool stratified = !class_index.empty();
    if (!stratified) {
        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s)
            for (std::size_t k = 0; k < targets[s]; ++k) parts[s]->push_back(order[pos++]);
        return split;
    }

    // group shuffled indices by class
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i : order) by_class[class_index[i]].push_back(i);

    // per-class largest-remainder allocation
    std::map<int, std::array<std::size_t, 3>> alloc;
    for (auto& [c, members] : by_class) {
        auto a = detail::apportion(members.size(), frac);
        alloc[c] = {a[0], a[1], a[2]};
        if (members.size() < 3)
            split.warnings.push_back("class " + std::to_string(c) +
                                     " has fewer samples than split parts");
    }

    // rebalance so split totals match the targets exactly, moving samples of
    // the class whose allocation deviates most in the right direction
    auto totals = [&] {
        std::array<std::size_t, 3> t{0, 0, 0};
        for (auto& [c, a] : alloc)
            for (int s = 0; s < 3; ++s) t[s] += a[s];
        return t;
    };
    for (std::array<std::size_t, 3> t = totals(); t != targets; t = totals()) {
        int from = -1, to = -1;
        for (int s = 0; s < 3; ++s) {
            if (t[s] > targets[s]) from = s;
            if (t[s] < targets[s]) to = s;
        }
        if (from < 0 || to < 0) break;
        int best_class = -1;
        double best_score = -1e300;
        for (auto& [c, a] : alloc) {
            if (a[from] == 0) continue;
            const double ideal_from = frac[from] * static_cast<double>(by_class[c].size());
            const double ideal_to = frac[to] * static_cast<double>(by_class[c].size());
            const double score = (static_cast<double>(a[from]) - ideal_from) -
                                 (static_cast<double>(a[to]) - ideal_to);
            if (score > best_score) {
                best_score = score;
                best_class = c;
            }
        }
        --alloc[best_class][from];
        ++alloc[best_class][to];
    }

    for (auto& [c, members] : by_class) {
        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s)
            for (std::size_t k = 0; k < alloc[c][s]; ++k) parts[s]->push_back(members[pos++]);
    }
    for (int s = 0; s < 3; ++s) std::sort(parts[s]->begin(), parts[s]->end());
    return split;
}

// Min-max parameters fitted on the training split only.
struct NormParams {
    std::vector<double> x_min, x_max;
    std::vector<double> t_min, t_max;  // regression targets only
    std::vector<bool> x_constant;
    TargetKind kind = TargetKind::classification;

    static constexpr double kRegLow = 0.1;
    static constexpr double kRegHigh = 0.9;

    double inverse_target(double scaled, std::size_t col) const {
        const double unit = (scaled - kRegLow) / (kRegHigh - kRegLow);
        return t_min[col] + unit * (t_max[col] - t_min[col]);
    }
};

inline NormParams fit_normalization(const Matrix& x, const Matrix& t, TargetKind kind,
                                    const std::vector<std::size_t>& fit_rows) {
    if (fit_rows.empty()) throw std::invalid_argument("fit_normalization: empty fit rows");
    NormParams np;
    np.kind = kind;
    np.x_min.assign(x.cols, std::numeric_limits<double>::infinity());
    np.x_max.assign(x.cols, -std::numeric_limits<double>::infinity());
    np.x_constant.assign(x.cols, false);
    for (std::size_t r : fit_rows)
        for (std::size_t c = 0; c < x.cols; ++c) {
            if (!std::isfinite(x(r, c)))
                throw std::invalid_argument("fit_normalization: non-finite value");
            np.x_min[c] = std::min(np.x_min[c], x(r, c));
            np.x_max[c] = std::max(np.x_max[c], x(r, c));
        }
    for (std::size_t c = 0; c < x.cols; ++c)
        if (np.x_max[c] == np.x_min[c]) np.x_constant[c] = true;
    if (kind == TargetKind::regression) {
        np.t_min.assign(t.cols, std::numeric_limits<double>::infinity());
        np.t_max.assign(t.cols, -std::numeric_limits<double>::infinity());
        for (std::size_t r : fit_rows)
            for (std::size_t c = 0; c < t.cols; ++c) {
                np.t_min[c] = std::min(np.t_min[c], t(r, c));
                np.t_max[c] = std::max(np.t_max[c], t(r, c));
            }
    }
    return np;
}

// Inputs to [0,1] (clamped; constant columns pinned at 0.5), regression
// targets to [0.1, 0.9].
inline void apply_normalization(Matrix& x, Matrix& t, const NormParams& np) {
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.cols; ++c) {
            if (np.x_constant[c]) {
                x(r, c) = 0.5;
            } else {
                const double u = (x(r, c) - np.x_min[c]) / (np.x_max[c] - np.x_min[c]);
                x(r, c) = std::clamp(u, 0.0, 1.0);
            }
        }
    if (np.kind == TargetKind::regression) {
        for (std::size_t r = 0; r < t.rows; ++r)
            for (std::size_t c = 0; c < t.cols; ++c) {
                if (np.t_max[c] == np.t_min[c]) {
                    t(r, c) = 0.5;
                } else {
                    const double u = (t(r, c) - np.t_min[c]) / (np.t_max[c] - np.t_min[c]);
                    t(r, c) = NormParams::kRegLow +
                              std::clamp(u, 0.0, 1.0) * (NormParams::kRegHigh - NormParams::kRegLow);
                }
            }
    }
}

inline Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

// Full ingestion pipeline: load, encode, split (seeded), normalize with
// train-split statistics, materialize split matrices.
struct PreparedDataset {
    std::string name;
    TargetKind kind = TargetKind::classification;
    std::vector<std::string> class_names;
    int hidden_nodes = 0;
    Matrix x_train, t_train, x_val, t_val, x_test, t_test;
    Split split;
    NormParams norm;
    std::size_t patterns = 0;
    std::size_t dropped_rows = 0;
    std::size_t dropped_unknown_label = 0;

    int inputs() const { return static_cast<int>(x_train.cols); }
    int outputs() const { return static_cast<int>(t_train.cols); }
};

inline PreparedDataset prepare_dataset(const std::string& data_path, const SchemaConfig& schema,
                                       std::uint64_t split_seed,
                                       std::array<double, 3> fractions = {0.5, 0.25, 0.25},
                                       const std::array<std::size_t, 3>* counts = nullptr) {
    const RawTable table = load_delimited(data_path, schema);
    const EncodedData enc = encode(table, schema);

    PreparedDataset ds;
    ds.name = schema.name;
    ds.kind = enc.kind;
    ds.class_names = enc.class_names;
    ds.patterns = enc.x.rows;
    ds.dropped_rows = enc.dropped_rows;
    ds.dropped_unknown_label = enc.dropped_unknown_label;
    ds.hidden_nodes = schema.hidden_nodes > 0
                          ? schema.hidden_nodes
                          : std::min<int>(15, static_cast<int>(enc.x.cols + enc.t.cols));

    ds.split = split_dataset(enc.x.rows, enc.class_index, fractions, split_seed, counts);

    ds.norm = fit_normalization(enc.x, enc.t, enc.kind, ds.split.train);
    Matrix x = enc.x;
    Matrix t = enc.t;
    apply_normalization(x, t, ds.norm);

    ds.x_train = take_rows(x, ds.split.train);
    ds.t_train = take_rows(t, ds.split.train);
    ds.x_val = take_rows(x, ds.split.validation);
    ds.t_val = take_rows(t, ds.split.validation);
    ds.x_test = take_rows(x, ds.split.test);
    ds.t_test = take_rows(t, ds.split.test);
    return ds;
}

}  // namespace expabs
