#include "harness/report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <vector>

#include "core/error.hpp"
#include "eval/metrics.hpp"
#include "json.hpp"

namespace steerlab {
namespace {

struct RowRec {
    TradeoffPoint p;
    std::string backbone_hash, adapter_hash, extractor_hash;
};

struct Fragment {
    std::string adapter;
    std::map<std::string, std::string> meta;
    std::vector<RowRec> rows;
};

// Shortest round-trip decimal, same contract as the JSON serializer, so the
// CSV and results.json carry bit-identical values.
std::string fnum(double v) {
    char b[64];
    auto r = std::to_chars(b, b + sizeof b, v);
    return std::string(b, r.ptr);
}

std::string f4(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.4f", v);
    return b;
}

std::string fg(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

std::string fpix(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.2f", v);
    return b;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

std::vector<Fragment> load_fragments(const std::string& out_dir) {
    std::vector<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(out_dir)) {
        if (!e.is_regular_file()) continue;
        std::string n = e.path().filename().string();
        if (n.rfind("sweep_", 0) == 0 && n.size() > 11 &&
            n.substr(n.size() - 5) == ".json")
            names.push_back(n);
    }
    std::sort(names.begin(), names.end());
    std::vector<Fragment> frags;
    for (const auto& n : names) {
        std::ifstream f(out_dir + "/" + n);
        if (!f) throw IoError("cannot read " + out_dir + "/" + n);
        nlohmann::json j = nlohmann::json::parse(f);
        Fragment fr;
        fr.adapter = j.at("adapter").get<std::string>();
        for (const auto& [k, v] : j.at("meta").items())
            fr.meta[k] = v.get<std::string>();
        for (const auto& r : j.at("rows")) {
            RowRec rr;
            rr.p.adapter = r.at("adapter").get<std::string>();
            rr.p.knob = r.at("knob").get<double>();
            rr.p.eff = r.at("eff").get<double>();
            rr.p.prompt_index = r.at("prompt_index").get<int>();
            rr.p.content_id = r.at("content_id").get<int>();
            rr.p.seed = r.at("seed").get<int>();
            rr.p.clip_i = r.at("clip_i").get<double>();
            rr.p.clip_t = r.at("clip_t").get<double>();
            rr.p.style_shift = r.at("style_shift").get<double>();
            rr.p.inv_stab = r.at("inv_stab").get<double>();
            rr.p.struct_dist = r.at("struct_dist").get<double>();
            rr.backbone_hash = r.at("backbone_hash").get<std::string>();
            rr.adapter_hash = r.at("adapter_hash").get<std::string>();
            rr.extractor_hash = r.at("extractor_hash").get<std::string>();
            fr.rows.push_back(rr);
        }
        frags.push_back(std::move(fr));
    }
    return frags;
}

std::vector<TradeoffPoint> points_of(const Fragment& fr) {
    std::vector<TradeoffPoint> pts;
    pts.reserve(fr.rows.size());
    for (const auto& r : fr.rows) pts.push_back(r.p);
    return pts;
}

const Fragment* find_fragment(const std::vector<Fragment>& frags,
                              const std::string& tag) {
    for (const auto& f : frags)
        if (f.adapter == tag) return &f;
    return nullptr;
}

// ---- canonical results ------------------------------------------------

void write_results(const Config& cfg, const std::string& out_dir,
                   const std::vector<Fragment>& frags) {
    std::vector<RowRec> rows;
    for (const auto& f : frags)
        rows.insert(rows.end(), f.rows.begin(), f.rows.end());
    std::sort(rows.begin(), rows.end(), [](const RowRec& a, const RowRec& b) {
        if (a.p.adapter != b.p.adapter) return a.p.adapter < b.p.adapter;
        if (a.p.knob != b.p.knob) return a.p.knob < b.p.knob;
        if (a.p.seed != b.p.seed) return a.p.seed < b.p.seed;
        return a.p.prompt_index < b.p.prompt_index;
    });

    nlohmann::json doc;
    nlohmann::json jconf = nlohmann::json::object();
    for (const auto& [k, v] : cfg.items()) jconf[k] = v;
    doc["config"] = jconf;

    nlohmann::json jparams = nlohmann::json::object();
    {
        std::ifstream f(out_dir + "/params.json");
        if (f) jparams = nlohmann::json::parse(f);
    }
    doc["params"] = jparams;

    nlohmann::json jsweeps = nlohmann::json::object();
    for (const auto& f : frags) {
        nlohmann::json m = nlohmann::json::object();
        for (const auto& [k, v] : f.meta) m[k] = v;
        jsweeps[f.adapter] = m;
    }
    doc["sweeps"] = jsweeps;

    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j;
        j["adapter"] = r.p.adapter;
        j["knob"] = r.p.knob;
        j["eff"] = r.p.eff;
        j["prompt_index"] = r.p.prompt_index;
        j["content_id"] = r.p.content_id;
        j["seed"] = r.p.seed;
        j["clip_i"] = r.p.clip_i;
        j["clip_t"] = r.p.clip_t;
        j["style_shift"] = r.p.style_shift;
        j["inv_stab"] = r.p.inv_stab;
        j["struct_dist"] = r.p.struct_dist;
        j["backbone_hash"] = r.backbone_hash;
        j["adapter_hash"] = r.adapter_hash;
        j["extractor_hash"] = r.extractor_hash;
        jrows.push_back(j);
    }
    doc["rows"] = jrows;

    doc["notes"] = nlohmann::json::array(
        {"clip_i/clip_t/style_shift/struct_dist are frozen-feature-extractor "
         "proxies computed on this run's extractor, not CLIP or LPIPS",
         "wall-clock timings live in timings.json only; this file is "
         "byte-deterministic for a fixed config",
         "every row carries the backbone/adapter/extractor checkpoint hashes "
         "it was computed from"});

    write_text_file(out_dir + "/results.json", doc.dump(1) + "\n");

    std::ostringstream csv;
    csv << "adapter,knob,eff,prompt_index,content_id,seed,clip_i,clip_t,"
           "style_shift,inv_stab,struct_dist,backbone_hash,adapter_hash,"
           "extractor_hash\n";
    for (const auto& r : rows) {
        csv << r.p.adapter << ',' << fnum(r.p.knob) << ',' << fnum(r.p.eff)
            << ',' << r.p.prompt_index << ',' << r.p.content_id << ','
            << r.p.seed << ',' << fnum(r.p.clip_i) << ',' << fnum(r.p.clip_t)
            << ',' << fnum(r.p.style_shift) << ',' << fnum(r.p.inv_stab)
            << ',' << fnum(r.p.struct_dist) << ',' << r.backbone_hash << ','
            << r.adapter_hash << ',' << r.extractor_hash << '\n';
    }
    write_text_file(out_dir + "/results.csv", csv.str());
}

// ---- svg plotting ------------------------------------------------------

struct PlotSeries {
    std::string label;
    std::string color;
    double width = 1.5;
    bool markers = true;
    std::vector<std::array<double, 2>> pts;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

void render_panel(std::ostringstream& os, double px, double py, double pw,
                  double ph, const std::string& title,
                  const std::string& xlabel, const std::string& ylabel,
                  const std::vector<PlotSeries>& series, bool legend) {
    double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
    bool first = true;
    for (const auto& s : series)
        for (const auto& p : s.pts) {
            if (first) {
                xlo = xhi = p[0];
                ylo = yhi = p[1];
                first = false;
            }
            xlo = std::min(xlo, p[0]);
            xhi = std::max(xhi, p[0]);
            ylo = std::min(ylo, p[1]);
            yhi = std::max(yhi, p[1]);
        }
    if (xhi - xlo < 1e-12) { xlo -= 0.5; xhi += 0.5; }
    if (yhi - ylo < 1e-12) { ylo -= 0.5; yhi += 0.5; }
    double xpad = 0.04 * (xhi - xlo), ypad = 0.06 * (yhi - ylo);
    xlo -= xpad; xhi += xpad; ylo -= ypad; yhi += ypad;
    auto mx = [&](double x) { return px + (x - xlo) / (xhi - xlo) * pw; };
    auto my = [&](double y) { return py + ph - (y - ylo) / (yhi - ylo) * ph; };

    os << "<rect x='" << fpix(px) << "' y='" << fpix(py) << "' width='"
       << fpix(pw) << "' height='" << fpix(ph)
       << "' fill='none' stroke='#555' stroke-width='1'/>\n";
    os << "<text x='" << fpix(px + pw / 2) << "' y='" << fpix(py - 10)
       << "' text-anchor='middle' font-size='13' fill='#222'>" << title
       << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        double xv = xlo + (xhi - xlo) * i / 4.0;
        double yv = ylo + (yhi - ylo) * i / 4.0;
        os << "<line x1='" << fpix(mx(xv)) << "' y1='" << fpix(py + ph)
           << "' x2='" << fpix(mx(xv)) << "' y2='" << fpix(py + ph + 4)
           << "' stroke='#555'/>\n";
        os << "<text x='" << fpix(mx(xv)) << "' y='" << fpix(py + ph + 16)
           << "' text-anchor='middle' font-size='10' fill='#333'>" << fg(xv)
           << "</text>\n";
        os << "<line x1='" << fpix(px - 4) << "' y1='" << fpix(my(yv))
           << "' x2='" << fpix(px) << "' y2='" << fpix(my(yv))
           << "' stroke='#555'/>\n";
        os << "<text x='" << fpix(px - 7) << "' y='" << fpix(my(yv) + 3)
           << "' text-anchor='end' font-size='10' fill='#333'>" << fg(yv)
           << "</text>\n";
    }
    os << "<text x='" << fpix(px + pw / 2) << "' y='" << fpix(py + ph + 32)
       << "' text-anchor='middle' font-size='11' fill='#222'>" << xlabel
       << "</text>\n";
    os << "<text x='" << fpix(px - 48) << "' y='" << fpix(py + ph / 2)
       << "' text-anchor='middle' font-size='11' fill='#222' transform='rotate(-90 "
       << fpix(px - 48) << " " << fpix(py + ph / 2) << ")'>" << ylabel
       << "</text>\n";

    for (const auto& s : series) {
        if (s.pts.empty()) continue;
        os << "<polyline fill='none' stroke='" << s.color
           << "' stroke-width='" << fpix(s.width) << "' points='";
        for (const auto& p : s.pts)
            os << fpix(mx(p[0])) << "," << fpix(my(p[1])) << " ";
        os << "'/>\n";
        if (s.markers)
            for (const auto& p : s.pts)
                os << "<circle cx='" << fpix(mx(p[0])) << "' cy='"
                   << fpix(my(p[1])) << "' r='2.5' fill='" << s.color
                   << "'/>\n";
    }
    if (legend) {
        double lx = px + pw + 12, ly = py + 8;
        for (const auto& s : series) {
            if (s.label.empty()) continue;
            os << "<line x1='" << fpix(lx) << "' y1='" << fpix(ly) << "' x2='"
               << fpix(lx + 18) << "' y2='" << fpix(ly) << "' stroke='"
               << s.color << "' stroke-width='2'/>\n";
            os << "<text x='" << fpix(lx + 23) << "' y='" << fpix(ly + 3.5)
               << "' font-size='10' fill='#222'>" << s.label << "</text>\n";
            ly += 15;
        }
    }
}

std::string svg_doc(double w, double h, const std::string& body) {
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << fpix(w)
       << "' height='" << fpix(h) << "' viewBox='0 0 " << fpix(w) << " "
       << fpix(h) << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
       << body << "</svg>\n";
    return os.str();
}

void write_tradeoff_svg(const std::string& out_dir,
                        const std::vector<Fragment>& frags) {
    std::vector<PlotSeries> series;
    int ci = 0;
    for (const auto& f : frags) {
        auto curve = pool_curve(points_of(f));
        PlotSeries s;
        s.label = f.adapter;
        s.color = kPalette[ci++ % 8];
        for (const auto& c : curve) s.pts.push_back({c.style_shift, c.clip_i});
        series.push_back(std::move(s));
    }
    std::ostringstream body;
    render_panel(body, 70, 40, 420, 330,
                 "style shift vs content preservation (pooled)",
                 "style_shift_proxy", "clip_i_proxy", series, true);
    write_text_file(out_dir + "/tradeoff.svg", svg_doc(660, 430, body.str()));
}

// Per-seed prompt-averaged metric curves for one adapter.
std::map<int, std::vector<std::array<double, 2>>> seed_curves(
    const std::vector<TradeoffPoint>& pts, double TradeoffPoint::*metric) {
    std::map<std::pair<int, double>, std::pair<double, int>> acc;
    for (const auto& p : pts) {
        auto& a = acc[{p.seed, p.knob}];
        a.first += p.*metric;
        a.second += 1;
    }
    std::map<int, std::vector<std::array<double, 2>>> out;
    for (const auto& [key, sum_n] : acc)
        out[key.first].push_back(
            {key.second, sum_n.first / double(sum_n.second)});
    return out;
}

void write_monotonicity_svg(const std::string& out_dir,
                            const std::vector<Fragment>& frags) {
    const Fragment* fr = find_fragment(frags, "steering");
    if (!fr && !frags.empty()) fr = &frags.front();
    if (!fr) return;
    auto pts = points_of(*fr);
    auto curve = pool_curve(pts);

    auto panel_series = [&](double TradeoffPoint::*metric,
                            double CurvePoint::*pooled, const char* color) {
        std::vector<PlotSeries> series;
        for (const auto& [sd, c] : seed_curves(pts, metric)) {
            PlotSeries s;
            s.label = "seed " + std::to_string(sd);
            s.color = "#aaaaaa";
            s.width = 1.0;
            s.markers = false;
            s.pts = c;
            series.push_back(std::move(s));
        }
        PlotSeries mean;
        mean.label = "pooled";
        mean.color = color;
        mean.width = 2.5;
        for (const auto& c : curve) mean.pts.push_back({c.knob, c.*pooled});
        series.push_back(std::move(mean));
        return series;
    };

    std::ostringstream body;
    render_panel(body, 70, 40, 290, 320,
                 "style_shift_proxy vs " + fr->meta.at("knob"),
                 fr->meta.at("knob"), "style_shift_proxy",
                 panel_series(&TradeoffPoint::style_shift,
                              &CurvePoint::style_shift, "#d62728"),
                 false);
    render_panel(body, 470, 40, 290, 320,
                 "clip_i_proxy vs " + fr->meta.at("knob"), fr->meta.at("knob"),
                 "clip_i_proxy",
                 panel_series(&TradeoffPoint::clip_i, &CurvePoint::clip_i,
                              "#1f77b4"),
                 true);
    write_text_file(out_dir + "/monotonicity.svg",
                    svg_doc(880, 420, body.str()));
}

// ---- summary.md --------------------------------------------------------

std::string gain_cell(const MatchedPair& m) {
    if (!m.gain_valid) return "n/a";
    char b[32];
    std::snprintf(b, sizeof b, "%+ld%%", m.gain_round);
    return b;
}

nlohmann::json load_params_json(const std::string& out_dir) {
    nlohmann::json j = nlohmann::json::object();
    std::ifstream f(out_dir + "/params.json");
    if (f) j = nlohmann::json::parse(f);
    return j;
}

// Matched-budget baselines must actually match the budget: a comparison
// against an adapter with a very different trained-parameter count is not a
// fair fight and is withheld. Returns the relative gap, or -1 when either
// count is unknown (then nothing is withheld — count info is best-effort).
double budget_gap(const nlohmann::json& params, const std::string& base) {
    if (!params.contains("steering") || !params.contains(base)) return -1.0;
    double s = params["steering"].get<double>();
    double b = params[base].get<double>();
    if (s <= 0) return -1.0;
    return std::abs(b - s) / s;
}

constexpr double kBudgetParityTol = 0.15;

bool parity_enforced(const std::string& base) {
    return base == "lora" || base == "rslora";
}

void append_matched_table(std::ostringstream& md,
                          const std::vector<CurvePoint>& steer_curve,
                          const Fragment& base, double tol) {
    auto pairs = matched_operating_points(steer_curve,
                                          pool_curve(points_of(base)), tol);
    md << "### steering vs " << base.adapter << "\n\n";
    if (pairs.empty()) {
        md << "No operating points matched within |delta clip_i_proxy| <= "
           << fg(tol) << ".\n\n";
        return;
    }
    md << "| steer s | base knob | base eff | clip_i steer | clip_i base | "
          "|d clip| | style steer | style base | style gain |\n";
    md << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& m : pairs)
        md << "| " << fg(m.steer_knob) << " | " << fg(m.base_knob) << " | "
           << fg(m.base_eff) << " | " << f4(m.steer_clip) << " | "
           << f4(m.base_clip) << " | " << f4(m.delta_clip) << " | "
           << f4(m.steer_style) << " | " << f4(m.base_style) << " | "
           << gain_cell(m) << " |\n";
    md << "\n";
}

void write_summary(const Config& cfg, const std::string& out_dir,
                   const std::vector<Fragment>& frags) {
    std::ostringstream md;
    md << "# Steering lab report\n\n";
    if (!frags.empty()) {
        const auto& m = frags.front().meta;
        md << "- backbone checkpoint: `" << m.at("backbone_hash") << "`\n";
        md << "- feature extractor: `" << m.at("extractor_hash") << "`\n";
        md << "- sampler: " << m.at("sampler_steps") << " steps, guidance "
           << m.at("guidance") << "\n";
        md << "- adapter budget: " << m.at("adapter_steps")
           << " steps x batch " << m.at("batch") << ", lr "
           << m.at("adapter_lr") << "\n";
        md << "- evaluation: " << m.at("eval_prompts") << " prompts x "
           << m.at("eval_seeds") << " seeds per knob\n\n";
    }
    md << "All image metrics (`clip_i_proxy`, `clip_t_proxy`, "
          "`style_shift_proxy`, `struct_dist_proxy`) come from this run's "
          "frozen feature extractor; they are stand-ins for CLIP/LPIPS, not "
          "the real models. `inv_stab` is latent cosine under inversion at "
          "guidance 1.\n\n";

    // Parameter budgets.
    nlohmann::json jparams = nlohmann::json::object();
    {
        std::ifstream f(out_dir + "/params.json");
        if (f) jparams = nlohmann::json::parse(f);
    }
    if (!jparams.empty()) {
        md << "## Trained parameter budgets\n\n";
        md << "| component | trained params | % of backbone |\n|---|---|---|\n";
        double backbone = jparams.contains("backbone")
                              ? jparams["backbone"].get<double>()
                              : 0.0;
        for (const auto& [k, v] : jparams.items()) {
            double n = v.get<double>();
            md << "| " << k << " | " << fnum(n) << " | ";
            if (backbone > 0 && k != "backbone")
                md << f4(100.0 * n / backbone) << "% |\n";
            else
                md << "- |\n";
        }
        md << "\n";
    }

    // Matched operating points.
    const Fragment* steer = find_fragment(frags, "steering");
    if (steer) {
        double tol = cfg.get_f64("eval.match_tol");
        auto steer_curve = pool_curve(points_of(*steer));
        md << "## Style gain at matched content drift (tol " << fg(tol)
           << ")\n\n";
        for (const char* b : {"lora", "rslora", "rank1", "sidebranch"}) {
            const Fragment* bf = find_fragment(frags, b);
            if (!bf) continue;
            double gap = parity_enforced(b) ? budget_gap(jparams, b) : -1.0;
            if (gap > kBudgetParityTol) {
                md << "### steering vs " << b << "\n\nWithheld: trained "
                   << "parameter budgets differ by " << f4(100 * gap)
                   << "% (parity tolerance "
                   << f4(100 * kBudgetParityTol) << "%).\n\n";
                continue;
            }
            append_matched_table(md, steer_curve, *bf, tol);
        }
    }

    // Pooled trade-off curves.
    md << "## Pooled operating points\n\n";
    for (const auto& f : frags) {
        md << "### " << f.adapter << "\n\n";
        md << "| " << f.meta.at("knob")
           << " | eff | clip_i_proxy | style_shift_proxy | inv_stab | n "
              "|\n|---|---|---|---|---|---|\n";
        for (const auto& c : pool_curve(points_of(f)))
            md << "| " << fg(c.knob) << " | " << fg(c.eff) << " | "
               << f4(c.clip_i) << " | " << f4(c.style_shift) << " | "
               << f4(c.inv_stab) << " | " << c.n << " |\n";
        md << "\n";
    }

    // Capacity sweep.
    std::vector<std::pair<int, const Fragment*>> ks;
    for (const auto& f : frags)
        if (f.adapter.rfind("steering_k", 0) == 0)
            ks.push_back({std::stoi(f.adapter.substr(10)), &f});
    std::sort(ks.begin(), ks.end());
    if (!ks.empty()) {
        md << "## Capacity sweep (code width k)\n\n";
        md << "| k | trained params | clip_i_proxy @ s=1 | style_shift_proxy "
              "@ s=1 |\n|---|---|---|---|\n";
        for (const auto& [k, f] : ks) {
            auto curve = pool_curve(points_of(*f));
            const CurvePoint* at1 = nullptr;
            for (const auto& c : curve)
                if (std::abs(c.knob - 1.0) < 1e-9) at1 = &c;
            md << "| " << k << " | " << f->meta.at("trained_params") << " | ";
            if (at1)
                md << f4(at1->clip_i) << " | " << f4(at1->style_shift)
                   << " |\n";
            else
                md << "- | - |\n";
        }
        md << "\n";
    }

    // Monotonicity.
    int shuffles = cfg.get_int("eval.perm_shuffles");
    md << "## Monotonicity in the knob\n\n";
    md << "| adapter | mean rho(style) | mean rho(clip_i) | p(style) | "
          "p(clip_i) | style viol. | clip viol. |\n"
          "|---|---|---|---|---|---|---|\n";
    for (const auto& f : frags) {
        auto pts = points_of(f);
        std::map<double, int> knobs;
        for (const auto& p : pts) knobs[p.knob] = 1;
        if (knobs.size() < 3) continue;
        MonotonicityReport r = monotonicity_report(pts, shuffles, 777);
        double rs = 0, rc = 0;
        for (const auto& s : r.per_seed) {
            rs += s.rho_style;
            rc += s.rho_clip_i;
        }
        rs /= double(r.per_seed.size());
        rc /= double(r.per_seed.size());
        md << "| " << f.adapter << " | " << f4(rs) << " | " << f4(rc) << " | "
           << fg(r.p_style) << " | " << fg(r.p_clip_i) << " | "
           << r.violations_style_str << " | " << r.violations_clip_i_str
           << " |\n";
    }
    md << "\np-values are two-sided permutation tests on the pooled "
          "per-seed curves ("
       << shuffles
       << " shuffles); violations count adjacent steps moving against the "
          "expected direction, summed over seeds.\n\n";
    md << "Wall-clock numbers live in `timings.json`; they are kept out of "
          "`results.json` and this file so both stay deterministic.\n";

    write_text_file(out_dir + "/summary.md", md.str());
}

}  // namespace

void cmd_report(const Config& cfg, const std::string& out_dir) {
    auto frags = load_fragments(out_dir);
    if (frags.empty())
        throw ConfigError("no sweep_*.json fragments in " + out_dir +
                          " (run sweep first)");
    write_results(cfg, out_dir, frags);
    write_tradeoff_svg(out_dir, frags);
    write_monotonicity_svg(out_dir, frags);
    write_summary(cfg, out_dir, frags);
}

void cmd_compare(const Config& cfg, const std::string& out_dir) {
    auto frags = load_fragments(out_dir);
    const Fragment* steer = find_fragment(frags, "steering");
    if (!steer)
        throw ConfigError("compare needs a steering sweep fragment in " +
                          out_dir);
    double tol = cfg.get_f64("eval.match_tol");
    auto steer_curve = pool_curve(points_of(*steer));
    nlohmann::json jparams = load_params_json(out_dir);

    nlohmann::json jout;
    jout["tol"] = tol;
    nlohmann::json jb = nlohmann::json::object();
    size_t total = 0;
    bool any_baseline = false;
    std::ostringstream diag;
    for (const char* b : {"lora", "rslora", "rank1", "sidebranch"}) {
        const Fragment* bf = find_fragment(frags, b);
        if (!bf) continue;
        double gap = parity_enforced(b) ? budget_gap(jparams, b) : -1.0;
        if (gap > kBudgetParityTol) {
            std::cout << "== steering vs " << b
                      << ": withheld, trained-parameter budgets differ by "
                      << f4(100 * gap) << "% (> "
                      << f4(100 * kBudgetParityTol) << "%) ==\n";
            continue;
        }
        any_baseline = true;
        auto curve = pool_curve(points_of(*bf));
        auto pairs = matched_operating_points(steer_curve, curve, tol);
        total += pairs.size();

        std::cout << "== steering vs " << b << " (|d clip_i| <= " << fg(tol)
                  << ") ==\n";
        if (pairs.empty()) {
            std::cout << "  no matched operating points\n";
        } else {
            std::cout << "  steer s   base knob  clip_i(s)  clip_i(b)  "
                         "style(s)  style(b)  gain\n";
            for (const auto& m : pairs) {
                char line[160];
                std::snprintf(line, sizeof line,
                              "  %-9s %-10s %-10s %-10s %-9s %-9s %s\n",
                              fg(m.steer_knob).c_str(),
                              fg(m.base_knob).c_str(), f4(m.steer_clip).c_str(),
                              f4(m.base_clip).c_str(), f4(m.steer_style).c_str(),
                              f4(m.base_style).c_str(), gain_cell(m).c_str());
                std::cout << line;
            }
        }
        double blo = 1e300, bhi = -1e300;
        for (const auto& c : curve) {
            blo = std::min(blo, c.clip_i);
            bhi = std::max(bhi, c.clip_i);
        }
        diag << "  " << b << ": clip_i_proxy range [" << f4(blo) << ", "
             << f4(bhi) << "]\n";

        nlohmann::json jp = nlohmann::json::array();
        for (const auto& m : pairs) {
            nlohmann::json j;
            j["steer_knob"] = m.steer_knob;
            j["base_knob"] = m.base_knob;
            j["base_eff"] = m.base_eff;
            j["steer_clip"] = m.steer_clip;
            j["base_clip"] = m.base_clip;
            j["delta_clip"] = m.delta_clip;
            j["steer_style"] = m.steer_style;
            j["base_style"] = m.base_style;
            j["gain_pct"] = m.gain_pct;
            j["gain_round"] = m.gain_round;
            j["gain_valid"] = m.gain_valid;
            jp.push_back(j);
        }
        jb[b] = jp;
    }
    if (!any_baseline)
        throw ConfigError(
            "compare needs at least one baseline sweep fragment "
            "(lora|rslora|rank1|sidebranch) in " +
            out_dir);
    jout["baselines"] = jb;
    write_text_file(out_dir + "/compare.json", jout.dump(1) + "\n");

    if (total == 0) {
        double slo = 1e300, shi = -1e300;
        for (const auto& c : steer_curve) {
            slo = std::min(slo, c.clip_i);
            shi = std::max(shi, c.clip_i);
        }
        std::cout << "no baseline matched any steering operating point within "
                     "tolerance "
                  << fg(tol) << "\n  steering: clip_i_proxy range ["
                  << f4(slo) << ", " << f4(shi) << "]\n"
                  << diag.str()
                  << "  widen eval.match_tol or extend the baseline knob "
                     "grids so the clip ranges overlap\n";
        throw GateError("no matched operating points within tolerance");
    }
}

}  // namespace steerlab
