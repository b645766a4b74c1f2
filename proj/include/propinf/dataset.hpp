#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "propinf/common.hpp"

namespace propinf {

// ---------------------------------------------------------------------------
// Schema and dataset
// ---------------------------------------------------------------------------

struct Column {
    std::string name;
    bool categorical = false;
    std::vector<std::string> labels;  // categorical domain; empty for numeric

    static Column numeric(std::string name) { return Column{std::move(name), false, {}}; }
    static Column cat(std::string name, std::vector<std::string> labels) {
        return Column{std::move(name), true, std::move(labels)};
    }
};

struct AttributeSchema {
    std::vector<Column> columns;
    std::string sensitive;  // optional; empty means none
    std::string target;

    void validate() const {
        if (!sensitive.empty() && sensitive == target)
            throw Error("schema: sensitive column must differ from target");
        std::unordered_set<std::string> seen;
        for (const auto& c : columns) {
            if (!seen.insert(c.name).second) throw Error("schema: duplicate column " + c.name);
            if (c.categorical && c.labels.size() < 2)
                throw Error("schema: categorical domain of " + c.name + " must have >= 2 values");
        }
        if (!target.empty() && !has(target)) throw Error("schema: unknown target " + target);
        if (!sensitive.empty() && !has(sensitive)) throw Error("schema: unknown sensitive " + sensitive);
    }

    bool has(const std::string& name) const {
        for (const auto& c : columns)
            if (c.name == name) return true;
        return false;
    }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].name == name) return i;
        throw Error("schema: unknown column " + name);
    }
};

// Cells are doubles; categorical cells store the label index. Datasets are
// immutable after construction and safe to share across threads.
struct TabularDataset {
    AttributeSchema schema;
    std::size_t n_records = 0;
    std::vector<double> cells;  // n_records x columns, row-major

    std::size_t n_columns() const { return schema.columns.size(); }
    double at(std::size_t r, std::size_t c) const { return cells[r * n_columns() + c]; }
    double& at(std::size_t r, std::size_t c) { return cells[r * n_columns() + c]; }

    std::vector<double> column(const std::string& name) const {
        std::size_t j = schema.index_of(name);
        std::vector<double> out(n_records);
        for (std::size_t i = 0; i < n_records; ++i) out[i] = at(i, j);
        return out;
    }

    TabularDataset take(const std::vector<std::size_t>& rows) const {
        TabularDataset out;
        out.schema = schema;
        out.n_records = rows.size();
        out.cells.reserve(rows.size() * n_columns());
        for (std::size_t r : rows)
            out.cells.insert(out.cells.end(), cells.begin() + r * n_columns(),
                             cells.begin() + (r + 1) * n_columns());
        return out;
    }

    // Class ids of the target column.
    std::vector<int> labels() const {
        std::size_t j = schema.index_of(schema.target);
        std::vector<int> y(n_records);
        for (std::size_t i = 0; i < n_records; ++i) y[i] = static_cast<int>(at(i, j));
        return y;
    }

    std::size_t n_classes() const {
        return schema.columns[schema.index_of(schema.target)].labels.size();
    }
};

// ---------------------------------------------------------------------------
// PropertySpec: "fraction `ratio` of the records carry `value` in column
// `attribute`". For numeric columns, `value` is a threshold predicate of the
// form "<5" or ">5"; for categorical columns it is a domain label.
// ---------------------------------------------------------------------------

struct PropertySpec {
    std::string attribute;
    std::string value;
    double ratio = 0.0;

    void validate() const {
        if (ratio < 0.0 || ratio > 1.0) throw Error("property: ratio must be in [0,1]");
    }

    bool matches(const TabularDataset& ds, std::size_t row) const {
        std::size_t j = ds.schema.index_of(attribute);
        const Column& col = ds.schema.columns[j];
        double cell = ds.at(row, j);
        if (col.categorical) {
            std::size_t idx = static_cast<std::size_t>(cell);
            return col.labels[idx] == value;
        }
        if (value.size() >= 2 && (value[0] == '<' || value[0] == '>')) {
            double thr = std::stod(value.substr(1));
            return value[0] == '<' ? cell < thr : cell > thr;
        }
        return cell == std::stod(value);
    }
};

inline long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c == '\r') {
            // tolerate CRLF
        } else {
            cur += c;
        }
    }
    if (quoted) throw Error("csv: unterminated quote at line " + std::to_string(line_no));
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

// Maps a raw label value to its bin; identity when empty.
using LabelGrouping = std::unordered_map<std::string, std::string>;

struct CsvLoadResult {
    TabularDataset dataset;
    std::size_t dropped = 0;  // rows removed for missing values
};

inline CsvLoadResult load_csv(const std::string& path, const AttributeSchema& schema,
                              const LabelGrouping& grouping = {}) {
    schema.validate();
    std::ifstream in(path);
    if (!in) throw Error("csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw Error("csv: empty file " + path);
    auto header = detail::split_csv_line(line, 1);
    if (header.size() != schema.columns.size())
        throw Error("csv: header has " + std::to_string(header.size()) + " columns, schema expects " +
                    std::to_string(schema.columns.size()));
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] != schema.columns[j].name)
            throw Error("csv: header column '" + header[j] + "' does not match schema '" +
                        schema.columns[j].name + "'");

    std::size_t target_idx = schema.index_of(schema.target);
    CsvLoadResult res;
    res.dataset.schema = schema;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line, line_no);
        if (fields.size() != schema.columns.size())
            throw Error("csv: malformed row at line " + std::to_string(line_no) + " (" +
                        std::to_string(fields.size()) + " fields)");
        bool missing = false;
        for (const auto& f : fields)
            if (f.empty()) {
                missing = true;
                break;
            }
        if (missing) {
            ++res.dropped;
            continue;
        }
        for (std::size_t j = 0; j < fields.size(); ++j) {
            const Column& col = schema.columns[j];
            std::string value = fields[j];
            if (j == target_idx && !grouping.empty()) {
                auto it = grouping.find(value);
                if (it == grouping.end())
                    throw Error("csv: no grouping bin for target value '" + value + "' at line " +
                                std::to_string(line_no));
                value = it->second;
            }
            if (col.categorical) {
                auto it = std::find(col.labels.begin(), col.labels.end(), value);
                if (it == col.labels.end())
                    throw Error("csv: unknown categorical value '" + value + "' in column " +
                                col.name + " at line " + std::to_string(line_no));
                res.dataset.cells.push_back(static_cast<double>(it - col.labels.begin()));
            } else {
                try {
                    std::size_t pos = 0;
                    double d = std::stod(value, &pos);
                    if (pos != value.size()) throw std::invalid_argument("trailing");
                    res.dataset.cells.push_back(d);
                } catch (const std::exception&) {
                    throw Error("csv: malformed numeric '" + value + "' in column " + col.name +
                                " at line " + std::to_string(line_no));
                }
            }
        }
        ++res.dataset.n_records;
    }
    if (res.dataset.n_records == 0) throw Error("csv: no usable rows in " + path);
    return res;
}

// ---------------------------------------------------------------------------
// One-hot encoding with min-max scaling. The encoder is fitted once (on the
// attacker's auxiliary data) and reused for every dataset in a pipeline so
// preprocessing never leaks other parties' statistics.
// ---------------------------------------------------------------------------

class Encoder {
public:
    Encoder() = default;

    static Encoder fit(const TabularDataset& ds) {
        Encoder enc;
        enc.schema_ = ds.schema;
        std::size_t target = ds.schema.index_of(ds.schema.target);
        for (std::size_t j = 0; j < ds.n_columns(); ++j) {
            if (j == target) continue;
            Field f;
            f.column = j;
            f.offset = enc.width_;
            const Column& col = ds.schema.columns[j];
            if (col.categorical) {
                f.width = col.labels.size();
            } else {
                f.width = 1;
                f.lo = f.hi = ds.at(0, j);
                for (std::size_t i = 1; i < ds.n_records; ++i) {
                    f.lo = std::min(f.lo, ds.at(i, j));
                    f.hi = std::max(f.hi, ds.at(i, j));
                }
            }
            enc.width_ += f.width;
            enc.fields_.push_back(f);
        }
        return enc;
    }

    std::size_t width() const { return width_; }

    Matrix transform(const TabularDataset& ds) const {
        check_compatible(ds);
        Matrix m(ds.n_records, width_);
        for (std::size_t i = 0; i < ds.n_records; ++i) {
            for (const Field& f : fields_) {
                double cell = ds.at(i, f.column);
                if (schema_.columns[f.column].categorical) {
                    m(i, f.offset + static_cast<std::size_t>(cell)) = 1.0;
                } else {
                    double span = f.hi - f.lo;
                    m(i, f.offset) = span > 0.0 ? std::clamp((cell - f.lo) / span, 0.0, 1.0) : 0.0;
                }
            }
        }
        return m;
    }

    // Recovers original categorical values from an encoded row (numeric
    // columns come back min-max scaled, so only the categorical map is
    // strictly invertible).
    std::vector<std::string> decode_categoricals(const double* row) const {
        std::vector<std::string> out;
        for (const Field& f : fields_) {
            const Column& col = schema_.columns[f.column];
            if (!col.categorical) continue;
            std::size_t best = 0;
            for (std::size_t k = 1; k < f.width; ++k)
                if (row[f.offset + k] > row[f.offset + best]) best = k;
            out.push_back(col.labels[best]);
        }
        return out;
    }

private:
    struct Field {
        std::size_t column = 0;
        std::size_t offset = 0;
        std::size_t width = 0;
        double lo = 0.0, hi = 0.0;
    };

    void check_compatible(const TabularDataset& ds) const {
        if (ds.n_columns() != schema_.columns.size())
            throw Error("encoder: column count mismatch");
        for (std::size_t j = 0; j < ds.n_columns(); ++j)
            if (ds.schema.columns[j].name != schema_.columns[j].name)
                throw Error("encoder: column order mismatch at " + ds.schema.columns[j].name);
    }

    AttributeSchema schema_;
    std::vector<Field> fields_;
    std::size_t width_ = 0;
};

struct EncodedDataset {
    Matrix features;
    Encoder encoder;
};

inline EncodedDataset one_hot_encode(const TabularDataset& ds) {
    Encoder enc = Encoder::fit(ds);
    return {enc.transform(ds), enc};
}

// ---------------------------------------------------------------------------
// Ratio-controlled resampling
// ---------------------------------------------------------------------------

struct ResampleOptions {
    bool allow_replacement_fallback = true;
};

// Draws `size` records so that exactly round(ratio*size) satisfy the property
// predicate. Sampling is without replacement; when a stratum is too small it
// falls back to with-replacement and records the fact in `used_replacement`.
inline TabularDataset resample_with_ratio(const TabularDataset& pool, const PropertySpec& spec,
                                          std::size_t size, std::uint64_t seed,
                                          const ResampleOptions& opts = {},
                                          bool* used_replacement = nullptr) {
    spec.validate();
    std::vector<std::size_t> with, without;
    for (std::size_t i = 0; i < pool.n_records; ++i)
        (spec.matches(pool, i) ? with : without).push_back(i);

    std::size_t n_with = static_cast<std::size_t>(round_half_up(spec.ratio * static_cast<double>(size)));
    std::size_t n_without = size - n_with;
    if (n_with > 0 && with.empty()) throw Error("resample: stratum with '" + spec.value + "' is empty");
    if (n_without > 0 && without.empty())
        throw Error("resample: stratum without '" + spec.value + "' is empty");

    Rng rng(seed);
    bool replaced = false;
    auto draw = [&](std::vector<std::size_t>& stratum, std::size_t n) {
        std::vector<std::size_t> out;
        if (n <= stratum.size()) {
            rng.shuffle(stratum);
            out.assign(stratum.begin(), stratum.begin() + n);
        } else {
            if (!opts.allow_replacement_fallback)
                throw Error("resample: stratum too small (" + std::to_string(stratum.size()) +
                            " < " + std::to_string(n) + ")");
            replaced = true;
            for (std::size_t i = 0; i < n; ++i)
                out.push_back(stratum[rng.below(stratum.size())]);
        }
        return out;
    };

    std::vector<std::size_t> rows = draw(with, n_with);
    std::vector<std::size_t> other = draw(without, n_without);
    rows.insert(rows.end(), other.begin(), other.end());
    rng.shuffle(rows);
    if (used_replacement) *used_replacement = replaced;
    return pool.take(rows);
}

// ---------------------------------------------------------------------------
// Attribute removal and dataset splits
// ---------------------------------------------------------------------------

inline TabularDataset drop_attribute(const TabularDataset& ds, const std::string& attr) {
    std::size_t j = ds.schema.index_of(attr);
    TabularDataset out;
    out.schema = ds.schema;
    out.schema.columns.erase(out.schema.columns.begin() + static_cast<std::ptrdiff_t>(j));
    if (out.schema.sensitive == attr) out.schema.sensitive.clear();
    if (out.schema.target == attr) throw Error("drop_attribute: cannot drop target column");
    out.n_records = ds.n_records;
    out.cells.reserve(ds.n_records * out.schema.columns.size());
    for (std::size_t i = 0; i < ds.n_records; ++i)
        for (std::size_t c = 0; c < ds.n_columns(); ++c)
            if (c != j) out.cells.push_back(ds.at(i, c));
    return out;
}

struct SplitSizes {
    std::size_t n_adv = 0;
    std::size_t n_honest = 0;
    std::size_t n_aux = 0;
    std::size_t n_attack = 0;
    std::size_t total() const { return n_adv + n_honest + n_aux + n_attack; }
};

struct DatasetSplits {
    TabularDataset adv;
    TabularDataset honest;
    TabularDataset aux;
    TabularDataset attack;  // carved out of the auxiliary portion, disjoint from it
};

inline DatasetSplits make_splits(const TabularDataset& pool, const SplitSizes& sizes,
                                 std::uint64_t seed) {
    if (pool.n_records < sizes.total())
        throw Error("make_splits: pool has " + std::to_string(pool.n_records) +
                    " records, need " + std::to_string(sizes.total()));
    std::vector<std::size_t> idx(pool.n_records);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);

    auto slice = [&](std::size_t from, std::size_t n) {
        return pool.take(std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(from),
                                                  idx.begin() + static_cast<std::ptrdiff_t>(from + n)));
    };
    DatasetSplits s;
    std::size_t off = 0;
    s.adv = slice(off, sizes.n_adv);
    off += sizes.n_adv;
    s.honest = slice(off, sizes.n_honest);
    off += sizes.n_honest;
    // D_attack is carved from the auxiliary region first, so shadow resamples
    // never reuse probe records.
    s.attack = slice(off, sizes.n_attack);
    off += sizes.n_attack;
    s.aux = slice(off, sizes.n_aux);
    return s;
}

inline TabularDataset concat(const TabularDataset& a, const TabularDataset& b) {
    if (a.n_columns() != b.n_columns()) throw Error("concat: column mismatch");
    TabularDataset out = a;
    out.n_records += b.n_records;
    out.cells.insert(out.cells.end(), b.cells.begin(), b.cells.end());
    return out;
}

// ---------------------------------------------------------------------------
// Dataset interchange: a self-describing textual format (schema header, then
// a CSV body) so shadow datasets can be inspected with ordinary tools.
// ---------------------------------------------------------------------------

inline void save_dataset(const TabularDataset& ds, std::ostream& out) {
    out << "#propinf-dataset v1\n";
    for (const auto& col : ds.schema.columns) {
        out << "column: " << col.name << (col.categorical ? " categorical" : " numeric");
        for (const auto& lab : col.labels) out << " " << lab;
        out << "\n";
    }
    if (!ds.schema.sensitive.empty()) out << "sensitive: " << ds.schema.sensitive << "\n";
    out << "target: " << ds.schema.target << "\n";
    out << "records: " << ds.n_records << "\n";
    out << "---\n";
    for (std::size_t i = 0; i < ds.n_records; ++i) {
        for (std::size_t j = 0; j < ds.n_columns(); ++j) {
            if (j) out << ",";
            const Column& col = ds.schema.columns[j];
            if (col.categorical)
                out << col.labels[static_cast<std::size_t>(ds.at(i, j))];
            else
                out << format_double(ds.at(i, j));
        }
        out << "\n";
    }
}

inline void save_dataset(const TabularDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_dataset: cannot open " + path);
    save_dataset(ds, out);
}

inline TabularDataset load_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "#propinf-dataset v1")
        throw Error("load_dataset: bad magic line");
    AttributeSchema schema;
    std::size_t declared = 0;
    while (std::getline(in, line)) {
        if (line == "---") break;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "column:") {
            std::string name, kind;
            ss >> name >> kind;
            if (kind == "numeric") {
                schema.columns.push_back(Column::numeric(name));
            } else if (kind == "categorical") {
                std::vector<std::string> labels;
                std::string lab;
                while (ss >> lab) labels.push_back(lab);
                schema.columns.push_back(Column::cat(name, std::move(labels)));
            } else {
                throw Error("load_dataset: bad column kind " + kind);
            }
        } else if (key == "sensitive:") {
            ss >> schema.sensitive;
        } else if (key == "target:") {
            ss >> schema.target;
        } else if (key == "records:") {
            ss >> declared;
        } else {
            throw Error("load_dataset: unknown header key " + key);
        }
    }
    schema.validate();
    TabularDataset ds;
    ds.schema = schema;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line, line_no);
        if (fields.size() != schema.columns.size())
            throw Error("load_dataset: malformed body row " + std::to_string(line_no));
        for (std::size_t j = 0; j < fields.size(); ++j) {
            const Column& col = schema.columns[j];
            if (col.categorical) {
                auto it = std::find(col.labels.begin(), col.labels.end(), fields[j]);
                if (it == col.labels.end())
                    throw Error("load_dataset: unknown value " + fields[j]);
                ds.cells.push_back(static_cast<double>(it - col.labels.begin()));
            } else {
                ds.cells.push_back(std::stod(fields[j]));
            }
        }
        ++ds.n_records;
    }
    if (ds.n_records != declared)
        throw Error("load_dataset: record count mismatch (header says " + std::to_string(declared) +
                    ", body has " + std::to_string(ds.n_records) + ")");
    return ds;
}

inline TabularDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_dataset: cannot open " + path);
    return load_dataset(in);
}

}  // namespace propinf
