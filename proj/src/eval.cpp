#include "b0cast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "b0cast/b0v_io.hpp"

namespace b0cast {

using nlohmann::json;

std::string approach_name(Approach a) {
    switch (a) {
        case Approach::NC: return "NC";
        case Approach::PR0: return "PR0";
        case Approach::EPI: return "EPI";
        case Approach::PRFT: return "PRFT";
    }
    throw Error("unreachable approach value");
}

double quantile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw ShapeError("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double f = h - static_cast<double>(lo);
    return values[lo] + f * (values[hi] - values[lo]);
}

ResidualStats residual_stats(const Volume3D& pred, const Volume3D& gt, const Mask3D& mask) {
    if (!(pred.grid == gt.grid) || !(pred.grid == mask.grid))
        throw ShapeError("residual_stats: grids differ");
    std::vector<double> abs_res;
    abs_res.reserve(mask.count_true());
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        if (mask.data[i])
            abs_res.push_back(std::abs(static_cast<double>(pred.data[i]) - gt.data[i]));
    if (abs_res.empty()) throw ShapeError("residual_stats: empty mask");
    ResidualStats s;
    s.median_hz = quantile_linear(abs_res, 0.5);
    s.iqr_hz = quantile_linear(abs_res, 0.75) - quantile_linear(abs_res, 0.25);
    return s;
}

double paired_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("paired_test: length mismatch");
    if (a.size() < 6) throw ShapeError("paired_test: needs at least 6 pairs");

    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double di = a[i] - b[i];
        if (di != 0.0) d.push_back(di);
    }
    if (d.empty()) return 1.0; // all differences zero, by convention

    const std::size_t n = d.size();
    // midranks of |d|
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
    std::vector<double> rank(n);
    std::vector<std::size_t> tie_sizes;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j); // average of ranks i+1..j
        for (std::size_t t = i; t < j; ++t) rank[order[t]] = mid;
        tie_sizes.push_back(j - i);
        i = j;
    }

    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (d[i] > 0.0) w_plus += rank[i];

    if (n <= 25) {
        // exact distribution over all sign assignments; scale ranks by 2 so
        // midranks become integers
        std::vector<long> r2(n);
        long total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            r2[i] = std::lround(2.0 * rank[i]);
            total += r2[i];
        }
        std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
        ways[0] = 1.0;
        long reach = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (long t = reach; t >= 0; --t)
                if (ways[static_cast<std::size_t>(t)] > 0.0)
                    ways[static_cast<std::size_t>(t + r2[i])] += ways[static_cast<std::size_t>(t)];
            reach += r2[i];
        }
        const double denom = std::pow(2.0, static_cast<double>(n));
        const long w2 = std::lround(2.0 * w_plus);
        double p_le = 0.0, p_ge = 0.0;
        for (long t = 0; t <= total; ++t) {
            if (t <= w2) p_le += ways[static_cast<std::size_t>(t)];
            if (t >= w2) p_ge += ways[static_cast<std::size_t>(t)];
        }
        return std::min(1.0, 2.0 * std::min(p_le, p_ge) / denom);
    }

    // normal approximation with tie correction and continuity correction
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    double tie_term = 0.0;
    for (std::size_t t : tie_sizes) {
        const double tt = static_cast<double>(t);
        tie_term += tt * tt * tt - tt;
    }
    const double sigma = std::sqrt(nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0);
    const double cc = w_plus > mu ? -0.5 : 0.5;
    const double z = (w_plus - mu + cc) / sigma;
    const double p = std::erfc(std::abs(z) / std::sqrt(2.0));
    return std::min(1.0, p);
}

std::vector<double> EvalReport::medians_for(Approach a) const {
    std::vector<double> out;
    for (const auto& c : cells)
        if (c.approach == a) out.push_back(c.stats.median_hz);
    return out;
}

void EvalReport::recompute_aggregates() {
    median_of_medians.clear();
    median_of_iqrs.clear();
    pairwise_p.clear();
    for (Approach a : {Approach::NC, Approach::PR0, Approach::EPI, Approach::PRFT}) {
        std::vector<double> med, iqr;
        for (const auto& c : cells)
            if (c.approach == a) {
                med.push_back(c.stats.median_hz);
                iqr.push_back(c.stats.iqr_hz);
            }
        if (med.empty()) continue;
        median_of_medians[approach_name(a)] = quantile_linear(med, 0.5);
        median_of_iqrs[approach_name(a)] = quantile_linear(iqr, 0.5);
    }
    const Approach all[] = {Approach::NC, Approach::PR0, Approach::EPI, Approach::PRFT};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) {
            const auto mi = medians_for(all[i]);
            const auto mj = medians_for(all[j]);
            if (mi.size() != mj.size() || mi.size() < 6) continue;
            pairwise_p[approach_name(all[i]) + "_vs_" + approach_name(all[j])] =
                paired_test(mi, mj);
        }
}

std::vector<ApproachResult> evaluate_subject(const std::filesystem::path& dataset_root,
                                             const SubjectArtifacts& art,
                                             const std::filesystem::path& residual_dir) {
    if (!art.subject) throw ConfigError("evaluate_subject: no subject");
    if (art.eval_positions.empty())
        throw ConfigError("evaluate_subject: needs at least one held-out position");
    const SubjectEntry& subj = *art.subject;
    const PositionVolumes initial = load_position(dataset_root, subj.positions.at(0), subj.id);

    std::vector<ApproachResult> results;
    std::vector<std::string> missing;
    for (int idx : art.eval_positions) {
        const PositionEntry* entry = nullptr;
        for (const auto& p : subj.positions)
            if (p.index == idx) entry = &p;
        if (!entry) {
            missing.push_back(subj.id + "/pos_" + std::to_string(idx));
            continue;
        }
        const PositionVolumes pv = load_position(dataset_root, *entry, subj.id);

        auto emit = [&](Approach a, const Volume3D& pred) {
            ApproachResult r;
            r.approach = a;
            r.subject = subj.id;
            r.position = idx;
            r.stats = residual_stats(pred, pv.field_gt, pv.mask);
            if (!residual_dir.empty()) {
                Volume3D res(pred.grid, Units::Hz);
                for (std::size_t i = 0; i < res.data.size(); ++i)
                    res.data[i] = std::abs(pred.data[i] - pv.field_gt.data[i]);
                const auto p = residual_dir / (subj.id + "_pos" + std::to_string(idx) + "_" +
                                               approach_name(a) + "_residual.b0v");
                write_volume(res, p);
                r.residual_path = p.string();
            }
            results.push_back(std::move(r));
        };

        emit(Approach::NC, initial.field_gt);
        if (art.general)
            emit(Approach::PR0, nn::predict(*art.general, initial.field_gt, initial.anat, pv.anat));
        else
            missing.push_back(subj.id + "/pos_" + std::to_string(idx) + "/PR0");
        emit(Approach::EPI, pv.nav_field);
        if (art.finetuned)
            emit(Approach::PRFT,
                 nn::predict(*art.finetuned, initial.field_gt, initial.anat, pv.anat));
        else
            missing.push_back(subj.id + "/pos_" + std::to_string(idx) + "/PRFT");
    }
    if (!missing.empty()) {
        std::string msg = "evaluate_subject: missing cells:";
        for (const auto& m : missing) msg += " " + m;
        throw PrerequisiteError(msg);
    }
    return results;
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
    json j;
    j["schema"] = "b0cast-eval-report-v1";
    json cells = json::array();
    for (const auto& c : report.cells)
        cells.push_back({{"approach", approach_name(c.approach)},
                         {"subject", c.subject},
                         {"position", c.position},
                         {"median_abs_residual_hz", c.stats.median_hz},
                         {"iqr_abs_residual_hz", c.stats.iqr_hz},
                         {"residual_path", c.residual_path}});
    j["cells"] = cells;
    j["median_of_medians_hz"] = report.median_of_medians;
    j["median_of_iqrs_hz"] = report.median_of_iqrs;
    j["pairwise_p"] = report.pairwise_p;
    std::ofstream f(path);
    if (!f) throw Error("cannot open for writing: " + path.string());
    f << j.dump(2) << '\n';
}

void write_fig3_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open for writing: " + path.string());
    f << "# boxplot whiskers convention: 1.5*IQR\n";
    f << "subject,position,approach,median_abs_residual_hz,iqr_abs_residual_hz\n";
    for (const auto& c : report.cells)
        f << c.subject << ',' << c.position << ',' << approach_name(c.approach) << ','
          << c.stats.median_hz << ',' << c.stats.iqr_hz << '\n';
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open for writing: " + path.string());
    f << "# boxplot whiskers convention: 1.5*IQR\n";
    f << "sweep,value,subject,position,median_abs_residual_hz,iqr_abs_residual_hz\n";
    for (const auto& r : rows)
        f << r.sweep << ',' << r.value << ',' << r.subject << ',' << r.position << ','
          << r.median_hz << ',' << r.iqr_hz << '\n';
}

} // namespace b0cast
