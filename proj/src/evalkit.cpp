#include "kldp/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <json.hpp>

#include "kldp/errors.hpp"

namespace kldp::eval {
namespace {

using json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string condition_name(const std::optional<double>& snr) {
    if (!snr || std::isinf(*snr)) return "clean";
    char buf[32];
    std::snprintf(buf, sizeof buf, "snr_%gdb", *snr);
    return buf;
}

double condition_order(const std::optional<double>& snr) {
    return (!snr || std::isinf(*snr)) ? -std::numeric_limits<double>::infinity() : -*snr;
}

std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

json nullable(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

template <class T>
json nullable(const std::optional<T>& x) {
    return x ? json(*x) : json(nullptr);
}

json label_json(const std::optional<FaultLabel>& label) {
    return label ? json(std::string(to_string(*label))) : json(nullptr);
}

std::optional<FaultLabel> label_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    const auto parsed = parse_fault_label(j.get<std::string>());
    if (!parsed) throw ValidationError("unrecognized fault label: " + j.get<std::string>());
    return parsed;
}

std::optional<double> number_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

json metrics_json(const DetectionMetrics& m) {
    json j;
    j["n_fault_scenarios"] = m.n_fault_scenarios;
    j["n_detected"] = m.n_detected;
    j["p_d"] = nullable(m.p_d);
    j["mean_t_d_ms"] = nullable(m.mean_t_d_ms);
    j["n_healthy_windows"] = m.n_healthy_windows;
    j["n_flagged_windows"] = m.n_flagged_windows;
    j["far"] = nullable(m.far);
    j["far_non_fault_scenarios"] = nullable(m.far_non_fault_scenarios);
    j["n_non_fault_scenarios"] = m.n_non_fault_scenarios;
    j["n_non_fault_trips"] = m.n_non_fault_trips;
    return j;
}

json confusion_json(const ConfusionResult& c) {
    json j;
    json labels = json::array();
    for (FaultLabel l : kFaultClasses) labels.push_back(std::string(to_string(l)));
    j["labels"] = labels;
    json rows = json::array();
    for (const auto& row : c.matrix) rows.push_back(row);
    j["matrix"] = rows;
    j["unknown"] = c.unknown;
    json f1 = json::array();
    for (double v : c.f1) f1.push_back(nullable(v));
    j["f1"] = f1;
    j["accuracy"] = c.accuracy;
    j["macro_f1"] = nullable(c.macro_f1);
    j["n"] = c.n;
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

bool DetectionOutcome::true_positive() const {
    return is_fault_target() && tripped && t_detect && t_f && *t_detect >= *t_f;
}

DetectionMetrics detection_metrics(std::span<const DetectionOutcome> outcomes) {
    if (outcomes.empty()) throw DegenerateInputError("no outcomes to evaluate");
    DetectionMetrics m;
    double td_sum = 0.0;
    std::size_t nf_windows = 0, nf_flagged = 0;
    for (const auto& o : outcomes) {
        if (o.window_d_sq.size() != o.window_faulty.size())
            throw ShapeError("window score and tag vectors differ in length: " + o.scenario_id);
        if (o.is_fault_target()) {
            ++m.n_fault_scenarios;
            if (o.true_positive()) {
                ++m.n_detected;
                td_sum += *o.t_detect - *o.t_f;
            }
        } else {
            ++m.n_non_fault_scenarios;
            if (o.tripped) ++m.n_non_fault_trips;
        }
        for (std::size_t w = 0; w < o.window_d_sq.size(); ++w) {
            if (o.window_faulty[w]) continue;
            const bool flagged = o.window_d_sq[w] > o.tau_det;
            ++m.n_healthy_windows;
            if (flagged) ++m.n_flagged_windows;
            if (!o.is_fault_target()) {
                ++nf_windows;
                if (flagged) ++nf_flagged;
            }
        }
    }
    m.p_d = m.n_fault_scenarios ? static_cast<double>(m.n_detected) / m.n_fault_scenarios : kNaN;
    m.mean_t_d_ms = m.n_detected ? 1000.0 * td_sum / m.n_detected : kNaN;
    m.far = m.n_healthy_windows ? static_cast<double>(m.n_flagged_windows) / m.n_healthy_windows : kNaN;
    m.far_non_fault_scenarios = nf_windows ? static_cast<double>(nf_flagged) / nf_windows : kNaN;
    return m;
}

RocResult roc_curve(std::span<const double> scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isnan(scores[i])) throw ValidationError("NaN score");
        if (labels[i]) ++pos;
    }
    const std::size_t neg = scores.size() - pos;
    if (pos == 0 || neg == 0) throw DegenerateInputError("ROC needs both positive and negative labels");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocResult r;
    r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            (labels[order[i]] ? tp : fp) += 1;
            ++i;
        }
        RocPoint p{static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, threshold};
        const RocPoint& prev = r.points.back();
        r.auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        r.points.push_back(p);
    }
    return r;
}

ConfusionResult confusion_and_f1(std::span<const FaultLabel> predicted, std::span<const FaultLabel> truth) {
    if (predicted.size() != truth.size()) throw ShapeError("prediction and truth vectors differ in length");
    if (truth.empty()) throw DegenerateInputError("no labels to compare");
    ConfusionResult c;
    c.n = truth.size();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = class_index(truth[i]);
        if (t < 0) throw ValidationError("truth labels must be one of the ten fault classes");
        const int p = class_index(predicted[i]);
        if (p < 0) {
            ++c.unknown[t];
            continue;
        }
        ++c.matrix[t][p];
        if (p == t) ++correct;
    }
    c.accuracy = static_cast<double>(correct) / c.n;
    double f1_sum = 0.0;
    int present = 0;
    for (int k = 0; k < 10; ++k) {
        std::size_t row = c.unknown[k], col = 0;
        for (int j = 0; j < 10; ++j) {
            row += c.matrix[k][j];
            col += c.matrix[j][k];
        }
        if (row == 0) {
            c.f1[k] = kNaN;
            continue;
        }
        const double tp = static_cast<double>(c.matrix[k][k]);
        const double precision = col ? tp / col : 0.0;
        const double recall = tp / row;
        c.f1[k] = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        f1_sum += c.f1[k];
        ++present;
    }
    c.macro_f1 = f1_sum / present;
    return c;
}

namespace {

std::optional<ConfusionResult> classification_of(std::span<const DetectionOutcome> outcomes) {
    std::vector<FaultLabel> pred, truth;
    for (const auto& o : outcomes) {
        if (!o.true_positive()) continue;
        truth.push_back(*o.truth);
        pred.push_back(o.predicted.value_or(FaultLabel::unknown));
    }
    if (truth.empty()) return std::nullopt;
    return confusion_and_f1(pred, truth);
}

}  // namespace

Report build_report(std::span<const DetectionOutcome> outcomes) {
    if (outcomes.empty()) throw DegenerateInputError("no outcomes to evaluate");
    std::map<std::pair<double, std::string>, std::vector<DetectionOutcome>> groups;
    for (const auto& o : outcomes) groups[{condition_order(o.snr_db), condition_name(o.snr_db)}].push_back(o);

    Report r;
    for (const auto& [key, members] : groups)
        r.rows.push_back({key.second, detection_metrics(members), classification_of(members)});
    r.rows.push_back({"overall", detection_metrics(outcomes), classification_of(outcomes)});
    r.confusion = r.rows.back().classification;

    std::vector<double> scores;
    std::vector<bool> labels;
    for (const auto& o : outcomes) {
        scores.insert(scores.end(), o.window_d_sq.begin(), o.window_d_sq.end());
        labels.insert(labels.end(), o.window_faulty.begin(), o.window_faulty.end());
    }
    const bool has_pos = std::find(labels.begin(), labels.end(), true) != labels.end();
    const bool has_neg = std::find(labels.begin(), labels.end(), false) != labels.end();
    if (has_pos && has_neg) r.roc = roc_curve(scores, labels);
    return r;
}

void write_report(const Report& report, const std::filesystem::path& dir, const std::string& config_hash) {
    std::filesystem::create_directories(dir);
    const std::string stamp = "# config_hash=" + config_hash + "\n";

    json doc;
    doc["config_hash"] = config_hash;
    json rows = json::array();
    for (const auto& row : report.rows) {
        json jr;
        jr["scenario"] = row.scenario;
        jr["detection"] = metrics_json(row.detection);
        jr["classification"] = row.classification ? confusion_json(*row.classification) : json(nullptr);
        rows.push_back(jr);
    }
    doc["conditions"] = rows;
    doc["auc"] = report.roc ? json(report.roc->auc) : json(nullptr);
    doc["confusion"] = report.confusion ? confusion_json(*report.confusion) : json(nullptr);
    write_text(dir / "report.json", doc.dump(2) + "\n");

    std::string roc = stamp + "fpr,tpr,threshold\n";
    if (report.roc)
        for (const auto& p : report.roc->points) roc += num(p.fpr) + "," + num(p.tpr) + "," + num(p.threshold) + "\n";
    write_text(dir / "roc_points.csv", roc);

    std::string conf = stamp + "truth";
    for (FaultLabel l : kFaultClasses) conf += "," + std::string(to_string(l));
    conf += ",unknown\n";
    for (int t = 0; t < 10; ++t) {
        conf += std::string(to_string(kFaultClasses[t]));
        for (int p = 0; p < 10; ++p)
            conf += "," + std::to_string(report.confusion ? report.confusion->matrix[t][p] : 0);
        conf += "," + std::to_string(report.confusion ? report.confusion->unknown[t] : 0) + "\n";
    }
    write_text(dir / "confusion.csv", conf);

    std::string summary = stamp +
                          "scenario,avg_time_ms,far_pct,p_d_pct,accuracy_pct,macro_f1_pct,"
                          "far_non_fault_pct,n_fault_scenarios,n_detected,n_non_fault_trips\n";
    for (const auto& row : report.rows) {
        const auto& d = row.detection;
        const double acc = row.classification ? 100.0 * row.classification->accuracy : kNaN;
        const double f1 = row.classification ? 100.0 * row.classification->macro_f1 : kNaN;
        summary += row.scenario + "," + num(d.mean_t_d_ms) + "," + num(100.0 * d.far) + "," + num(100.0 * d.p_d) +
                   "," + num(acc) + "," + num(f1) + "," + num(100.0 * d.far_non_fault_scenarios) + "," +
                   std::to_string(d.n_fault_scenarios) + "," + std::to_string(d.n_detected) + "," +
                   std::to_string(d.n_non_fault_trips) + "\n";
    }
    write_text(dir / "summary.csv", summary);
}

std::string outcome_to_json(const DetectionOutcome& o, const std::string& config_hash) {
    json j;
    j["config_hash"] = config_hash;
    j["scenario_id"] = o.scenario_id;
    j["tripped"] = o.tripped;
    j["t_detect"] = nullable(o.t_detect);
    j["t_f"] = nullable(o.t_f);
    j["predicted"] = label_json(o.predicted);
    j["truth"] = label_json(o.truth);
    j["internal"] = o.internal;
    j["snr_db"] = nullable(o.snr_db);
    j["source_mode"] = o.source_mode;
    j["tau_det"] = o.tau_det;
    j["window_t_end"] = o.window_t_end;
    j["window_d_sq"] = o.window_d_sq;
    j["window_faulty"] = o.window_faulty;
    return j.dump() + "\n";
}

DetectionOutcome outcome_from_json(const std::string& text) {
    DetectionOutcome o;
    try {
        const json j = json::parse(text);
        o.scenario_id = j.at("scenario_id").get<std::string>();
        o.tripped = j.at("tripped").get<bool>();
        o.t_detect = number_from(j.at("t_detect"));
        o.t_f = number_from(j.at("t_f"));
        o.predicted = label_from(j.at("predicted"));
        o.truth = label_from(j.at("truth"));
        o.internal = j.at("internal").get<bool>();
        o.snr_db = number_from(j.at("snr_db"));
        o.source_mode = j.value("source_mode", "");
        o.tau_det = j.at("tau_det").get<double>();
        o.window_t_end = j.at("window_t_end").get<std::vector<double>>();
        o.window_d_sq = j.at("window_d_sq").get<std::vector<double>>();
        o.window_faulty = j.at("window_faulty").get<std::vector<bool>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed outcome document: ") + e.what());
    }
    if (o.window_d_sq.size() != o.window_faulty.size() || o.window_t_end.size() != o.window_d_sq.size())
        throw ShapeError("outcome window arrays differ in length");
    return o;
}

}  // namespace kldp::eval
