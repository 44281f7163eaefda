#include "chebmps/runner.hpp"

#include "chebmps/exact.hpp"
#include "chebmps/variational.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

namespace chebmps {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long d = std::stoll(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "no")
        return false;
    throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

const std::vector<std::string>& model_keys(const std::string& model) {
    static const std::vector<std::string> ising{"J", "g", "h"}, xyz{"Jx", "Jy", "Jz", "h"}, stag{"J"}, none;
    if (model == "ising")
        return ising;
    if (model == "xyz")
        return xyz;
    if (model == "staggered")
        return stag;
    return none;
}

std::map<std::string, double> default_params(const std::string& model) {
    if (model == "ising")
        return {{"J", 1.0}, {"g", -1.05}, {"h", 0.5}};
    if (model == "xyz")
        return {{"Jx", 1.1}, {"Jy", -1.0}, {"Jz", 0.9}, {"h", 1.2}};
    if (model == "staggered")
        return {{"J", 1.0}};
    return {};
}

// ---- product states

cplx pair_expectation(const CMatrix& h, const CVector& a, const CVector& b) {
    const CVector ab = CVector(kron(CMatrix(a), CMatrix(b)));
    return ab.dot(h * ab);
}

std::vector<double> product_profile(const Model& m, std::span<const CVector> u) {
    const int N = m.N;
    std::vector<double> out(N);
    for (int n = 0; n + 1 < N; ++n)
        out[n] = pair_expectation(m.terms[n], u[n], u[n + 1]).real();
    out[N - 1] = u[N - 1].dot(m.terms[N - 1] * u[N - 1]).real();
    return out;
}

double product_energy(const Model& m, std::span<const CVector> u) {
    double e = m.offset;
    for (double v : product_profile(m, u))
        e += v;
    return e;
}

CVector bloch(double theta, double phi) {
    CVector v(2);
    v << std::cos(theta / 2), std::polar(1.0, phi) * std::sin(theta / 2);
    return v;
}

/// Normalized point on the segment from a to b after aligning b's phase.
CVector interpolate(const CVector& a, const CVector& b, double t) {
    const cplx ov = a.dot(b);
    const cplx ph = std::abs(ov) > 0.0 ? std::conj(ov) / std::abs(ov) : cplx(1.0);
    CVector v = (1.0 - t) * a + t * ph * b;
    return v.normalized();
}

template <typename F>
double root_on(F f, double lo, double hi) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0)
        return lo;
    if (fhi == 0.0)
        return hi;
    boost::uintmax_t iters = 200;
    auto tol = boost::math::tools::eps_tolerance<double>(52);
    auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
    return std::abs(f(a)) < std::abs(f(b)) ? a : b;
}

/// Bracket nearest `near` of a sign change of f on [0, 1].
template <typename F>
std::optional<double> nearest_root(F f, double near, int grid = 256) {
    std::optional<double> best;
    double prev_t = 0.0, prev_f = f(0.0);
    if (prev_f == 0.0)
        best = 0.0;
    for (int i = 1; i <= grid; ++i) {
        const double t = static_cast<double>(i) / grid;
        const double ft = f(t);
        if ((prev_f < 0.0) != (ft < 0.0) || ft == 0.0) {
            const double r = root_on(f, prev_t, t);
            if (!best || std::abs(r - near) < std::abs(*best - near))
                best = r;
        }
        prev_t = t;
        prev_f = ft;
    }
    return best;
}

/// Extremal single-site state for the uniform product energy density f.
CVector extremal_site(const CMatrix& h, double sign) {
    auto f = [&](double th, double ph) {
        const CVector u = bloch(th, ph);
        return sign * pair_expectation(h, u, u).real();
    };
    double bt = 0.0, bp = 0.0, bf = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 32; ++i)
        for (int j = 0; j < 64; ++j) {
            const double th = std::numbers::pi * i / 32, ph = 2 * std::numbers::pi * j / 64;
            const double v = f(th, ph);
            if (v > bf) {
                bf = v;
                bt = th;
                bp = ph;
            }
        }
    // coordinate refinement
    const double step_t = std::numbers::pi / 32, step_p = 2 * std::numbers::pi / 64;
    for (int it = 0; it < 8; ++it) {
        auto rt = boost::math::tools::brent_find_minima([&](double th) { return -f(th, bp); }, bt - step_t,
                                                        bt + step_t, 40);
        bt = rt.first;
        auto rp = boost::math::tools::brent_find_minima([&](double ph) { return -f(bt, ph); }, bp - step_p,
                                                        bp + step_p, 40);
        bp = rp.first;
    }
    return bloch(bt, bp);
}

/// Two-site product maximizing sign * <ab|h|ab> by alternating eigenvector
/// updates from random starts.
std::pair<CVector, CVector> extremal_pair(const CMatrix& h, double sign, std::mt19937_64& rng, int starts = 64) {
    std::normal_distribution<double> normal;
    auto random_site = [&] {
        CVector v(2);
        v << cplx(normal(rng), normal(rng)), cplx(normal(rng), normal(rng));
        return CVector(v.normalized());
    };
    auto top = [](const CMatrix& a) {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es{Eigen::Matrix2cd(a)};
        return CVector(es.eigenvectors().col(1));
    };
    const CMatrix hs = sign * h;
    double best = -std::numeric_limits<double>::infinity();
    std::pair<CVector, CVector> out;
    for (int s = 0; s < starts; ++s) {
        CVector a = random_site(), b = random_site();
        double val = pair_expectation(hs, a, b).real();
        for (int it = 0; it < 200; ++it) {
            CMatrix ra = CMatrix::Zero(2, 2), rb = CMatrix::Zero(2, 2);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k)
                        for (int l = 0; l < 2; ++l)
                            ra(i, j) += std::conj(b(k)) * hs(2 * i + k, 2 * j + l) * b(l);
            a = top(ra);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k)
                        for (int l = 0; l < 2; ++l)
                            rb(i, j) += std::conj(a(k)) * hs(2 * k + i, 2 * l + j) * a(l);
            b = top(rb);
            const double next = pair_expectation(hs, a, b).real();
            const bool done = next - val <= 1e-10 * std::max(1.0, std::abs(next));
            val = next;
            if (done)
                break;
        }
        if (val > best) {
            best = val;
            out = {a, b};
        }
    }
    return out;
}

// ---- schedule

double log_in(double x, const std::string& base) { return base == "2" ? std::log2(x) : std::log(x); }

} // namespace

// ---- config

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (kv.count(key))
            throw ConfigError("config: duplicate key " + key);
        kv[key] = value;
    }

    if (kv.count("model"))
        cfg.model = kv["model"];
    cfg.params = default_params(cfg.model);
    for (const auto& [key, value] : kv) {
        if (key == "model")
            continue;
        const auto& mk = model_keys(cfg.model);
        if (std::find(mk.begin(), mk.end(), key) != mk.end()) {
            cfg.params[key] = to_double(key, value);
        } else if (key == "N") {
            cfg.N.clear();
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ','))
                cfg.N.push_back(static_cast<int>(to_int(key, trim(item))));
        } else if (key == "schedule") {
            cfg.schedule = value;
        } else if (key == "d_max") {
            cfg.d_max = to_int(key, value);
        } else if (key == "E0") {
            cfg.E0 = to_double(key, value);
        } else if (key == "initial_state") {
            cfg.initial_state = value;
        } else if (key == "backend") {
            if (value == "mps")
                cfg.backend = Backend::mps;
            else if (value == "exact")
                cfg.backend = Backend::exact;
            else
                throw ConfigError("config: backend must be mps or exact");
        } else if (key == "output") {
            cfg.output = value;
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(to_int(key, value));
        } else if (key == "log_base") {
            cfg.log_base = value;
        } else if (key == "record_every") {
            cfg.record_every = static_cast<int>(to_int(key, value));
        } else if (key == "alpha") {
            if (value != "auto")
                cfg.alpha = to_double(key, value);
        } else if (key == "workers") {
            cfg.workers = static_cast<int>(to_int(key, value));
        } else if (key == "weight_tol") {
            cfg.weight_tol = to_double(key, value);
        } else if (key == "timing") {
            cfg.timing = to_bool(key, value);
        } else if (key == "variational_sweeps") {
            cfg.variational_sweeps = static_cast<int>(to_int(key, value));
        } else if (key == "block_max") {
            cfg.block_max = static_cast<int>(to_int(key, value));
        } else if (key == "L_c") {
            cfg.L_c = static_cast<int>(to_int(key, value));
        } else {
            throw ConfigError("config: unknown key " + key);
        }
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is)
        throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string format_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "model = " << cfg.model << '\n';
    for (const auto& key : model_keys(cfg.model))
        if (cfg.params.count(key))
            os << key << " = " << num(cfg.params.at(key)) << '\n';
    os << "N = ";
    for (std::size_t i = 0; i < cfg.N.size(); ++i)
        os << (i ? "," : "") << cfg.N[i];
    os << '\n';
    os << "schedule = " << cfg.schedule << '\n';
    os << "d_max = " << cfg.d_max << '\n';
    os << "E0 = " << num(cfg.E0) << '\n';
    os << "initial_state = " << cfg.initial_state << '\n';
    os << "backend = " << (cfg.backend == Backend::mps ? "mps" : "exact") << '\n';
    os << "output = " << cfg.output.string() << '\n';
    os << "seed = " << cfg.seed << '\n';
    os << "log_base = " << cfg.log_base << '\n';
    os << "record_every = " << cfg.record_every << '\n';
    os << "alpha = " << (cfg.alpha ? num(*cfg.alpha) : std::string("auto")) << '\n';
    os << "workers = " << cfg.workers << '\n';
    os << "weight_tol = " << num(cfg.weight_tol) << '\n';
    os << "timing = " << (cfg.timing ? "true" : "false") << '\n';
    os << "variational_sweeps = " << cfg.variational_sweeps << '\n';
    os << "block_max = " << cfg.block_max << '\n';
    os << "L_c = " << cfg.L_c << '\n';
    return os.str();
}

void validate(const ExperimentConfig& cfg) {
    if (model_keys(cfg.model).empty())
        throw ConfigError("config: unknown model " + cfg.model + " (ising, xyz, staggered)");
    if (cfg.N.empty())
        throw ConfigError("config: N is required");
    for (int N : cfg.N) {
        if (N < 4)
            throw ConfigError("config: N must be at least 4");
        if (cfg.backend == Backend::exact && N > kMaxExactSites)
            throw ConfigError("config: exact backend needs N <= " + std::to_string(kMaxExactSites));
        if (cfg.L_c < 1 || cfg.L_c > N)
            throw ConfigError("config: L_c must lie in [1, N]");
        resolve_schedule(cfg, N);
    }
    if (cfg.d_max < 1)
        throw ConfigError("config: d_max must be positive");
    if (cfg.log_base != "e" && cfg.log_base != "2")
        throw ConfigError("config: log_base must be e or 2");
    if (cfg.record_every < 0)
        throw ConfigError("config: record_every must be nonnegative");
    if (cfg.alpha && !(*cfg.alpha > 0.0))
        throw ConfigError("config: alpha must be positive");
    if (cfg.workers < 1)
        throw ConfigError("config: workers must be positive");
    if (!(cfg.weight_tol >= 0.0 && cfg.weight_tol < 1.0))
        throw ConfigError("config: weight_tol must lie in [0, 1)");
    if (cfg.variational_sweeps < 0)
        throw ConfigError("config: variational_sweeps must be nonnegative");
    if (cfg.variational_sweeps > 0 && cfg.backend == Backend::exact)
        throw ConfigError("config: variational runs need the mps backend");
    if (cfg.block_max < 0 || cfg.block_max > kBlockColumns)
        throw ConfigError("config: block_max must lie in [0, " + std::to_string(kBlockColumns) + "]");
    static const std::regex init(R"((Y\+|Z_st2|step|energy_target)(\(([-+0-9.eE]+)\))?)");
    if (!std::regex_match(cfg.initial_state, init))
        throw ConfigError("config: unknown initial_state " + cfg.initial_state);
    if (cfg.output.empty())
        throw ConfigError("config: output is required");
}

std::vector<int> resolve_schedule(const std::string& schedule, int N, const std::string& log_base) {
    std::string s;
    for (char c : schedule)
        if (!std::isspace(static_cast<unsigned char>(c)))
            s += c;
    static const std::regex list(R"(\d+(,\d+)*)");
    static const std::regex form(R"((([0-9]*\.?[0-9]+([eE][-+]?[0-9]+)?)\*)?(sqrt\(N\)|N\*log\(N\)|N\^2|N))");
    std::vector<int> out;
    std::smatch mt;
    if (std::regex_match(s, list)) {
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(std::stoi(item));
    } else if (std::regex_match(s, mt, form)) {
        const double c = mt[2].matched ? std::stod(mt[2].str()) : 1.0;
        const std::string f = mt[4].str();
        double x = N;
        if (f == "sqrt(N)")
            x = std::sqrt(static_cast<double>(N));
        else if (f == "N*log(N)")
            x = N * log_in(N, log_base);
        else if (f == "N^2")
            x = static_cast<double>(N) * N;
        out.push_back(static_cast<int>(std::lround(c * x)));
    } else {
        throw ConfigError("config: cannot parse schedule '" + schedule + "'");
    }
    for (int M : out)
        if (M < 1)
            throw ConfigError("config: schedule gives M < 1 at N = " + std::to_string(N));
    return out;
}

std::vector<int> resolve_schedule(const ExperimentConfig& cfg, int N) {
    return resolve_schedule(cfg.schedule, N, cfg.log_base);
}

Model build_model(const ExperimentConfig& cfg, int N) {
    auto p = default_params(cfg.model);
    for (const auto& [k, v] : cfg.params)
        p[k] = v;
    if (cfg.model == "ising")
        return build_ising(N, p["J"], p["g"], p["h"]);
    if (cfg.model == "xyz")
        return build_xyz(N, p["Jx"], p["Jy"], p["Jz"], p["h"]);
    if (cfg.model == "staggered")
        return build_staggered_heisenberg(N, p["J"]);
    throw ConfigError("config: unknown model " + cfg.model);
}

// ---- initial states

std::vector<CVector> y_plus_sites(int N) {
    CVector y(2);
    y << 1.0, cplx(0.0, 1.0);
    return std::vector<CVector>(N, y / std::sqrt(2.0));
}

std::vector<CVector> z_st2_sites(int N) {
    std::vector<CVector> out;
    for (int n = 0; n < N; ++n) {
        CVector v = CVector::Zero(2);
        v(n % 4 < 2 ? 0 : 1) = 1.0;
        out.push_back(v);
    }
    return out;
}

std::vector<CVector> step_sites(const Model& m, double e) {
    const int N = m.N;
    if (N < 4)
        throw std::invalid_argument("step state: N must be at least 4");
    if (!(e > 0.0))
        throw std::invalid_argument("step state: e must be positive");
    const CMatrix& hb = m.terms[N / 2 - 1];
    const CVector lo = extremal_site(hb, -1.0), hi = extremal_site(hb, 1.0);
    auto density = [&](double t) {
        const CVector u = interpolate(lo, hi, t);
        return pair_expectation(hb, u, u).real();
    };
    const double fmin = density(0.0), fmax = density(1.0);
    if (!(fmin < -e && fmax > e))
        throw std::invalid_argument("step state: uniform product densities span [" + num(fmin) + ", " + num(fmax) +
                                    "], which does not contain +-" + num(e));
    const double tl = root_on([&](double t) { return density(t) - e; }, 0.0, 1.0);
    const double tr0 = root_on([&](double t) { return density(t) + e; }, 0.0, 1.0);
    const CVector ul = interpolate(lo, hi, tl);
    auto sites_for = [&](double tr) {
        std::vector<CVector> u(N, ul);
        const CVector ur = interpolate(lo, hi, tr);
        for (int n = N / 2; n < N; ++n)
            u[n] = ur;
        return u;
    };
    const auto tr = nearest_root([&](double t) { return product_energy(m, sites_for(t)); }, tr0);
    if (!tr)
        throw std::invalid_argument("step state: no right-half density gives zero total energy");
    auto u = sites_for(*tr);
    if (std::abs(product_energy(m, u)) > 1e-8)
        throw std::runtime_error("step state: root finder missed zero energy");
    return u;
}

std::vector<CVector> energy_target_sites(const Model& m, double E0, std::uint64_t seed) {
    const int N = m.N;
    const int pairs = N / 2;
    std::mt19937_64 rng(seed ^ 0xe0e0ULL);
    std::vector<std::array<std::pair<CVector, CVector>, 2>> opt(pairs);
    double mmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < pairs; ++k) {
        const CMatrix& h = m.terms[2 * k];
        opt[k][0] = extremal_pair(h, 1.0, rng);
        opt[k][1] = extremal_pair(h, -1.0, rng);
        const double up = pair_expectation(h, opt[k][0].first, opt[k][0].second).real();
        const double dn = pair_expectation(h, opt[k][1].first, opt[k][1].second).real();
        mmin = std::min(mmin, std::max(up, -dn));
    }
    if (mmin < m.h_min / 3.0 - 1e-9)
        throw std::logic_error("energy_target: pair maximum below h_min / 3");

    std::vector<CVector> u(N, CVector::Zero(2));
    for (auto& v : u)
        v(0) = 1.0;
    std::vector<int> choice(pairs, 0);
    auto place = [&](int k, int c) {
        u[2 * k] = opt[k][c].first;
        u[2 * k + 1] = opt[k][c].second;
        choice[k] = c;
    };
    auto prefix_energy = [&](int k) {
        double e = 0.0;
        for (int n = 0; n < 2 * k + 1; ++n)
            e += pair_expectation(m.terms[n], u[n], u[n + 1]).real();
        return e;
    };
    // greedy: follow the target proportionally from the left
    for (int k = 0; k < pairs; ++k) {
        double best = 0.0;
        int bc = 0;
        for (int c = 0; c < 2; ++c) {
            place(k, c);
            const double e = k + 1 < pairs ? prefix_energy(k) : product_energy(m, u);
            const double goal = k + 1 < pairs ? (E0 - m.offset) * (2.0 * k + 2) / N : E0;
            if (c == 0 || std::abs(e - goal) < best) {
                best = std::abs(e - goal);
                bc = c;
            }
        }
        place(k, bc);
    }

    // continuous finish along one pair's path between its two extremal states
    for (int pass = 0; pass <= pairs; ++pass) {
        const double e_now = product_energy(m, u) - E0;
        if (std::abs(e_now) <= 1e-12)
            return u;
        int flip = -1;
        double flip_gap = std::abs(e_now);
        for (int k = pairs - 1; k >= 0; --k) {
            const auto& a = opt[k][choice[k]];
            const auto& b = opt[k][1 - choice[k]];
            auto along = [&](double t) {
                std::vector<CVector> w = u;
                w[2 * k] = interpolate(a.first, b.first, t);
                w[2 * k + 1] = interpolate(a.second, b.second, t);
                return product_energy(m, w) - E0;
            };
            const double e_flip = along(1.0);
            if ((e_now < 0.0) != (e_flip < 0.0)) {
                const auto t = nearest_root(along, 0.0, 32);
                if (t) {
                    u[2 * k] = interpolate(a.first, b.first, *t);
                    u[2 * k + 1] = interpolate(a.second, b.second, *t);
                    if (std::abs(product_energy(m, u) - E0) <= 1e-8)
                        return u;
                }
            }
            if (std::abs(e_flip) < flip_gap) {
                flip_gap = std::abs(e_flip);
                flip = k;
            }
        }
        if (flip < 0)
            break;
        place(flip, 1 - choice[flip]);
    }
    std::vector<CVector> lo = u, hi = u;
    for (int k = 0; k < pairs; ++k) {
        lo[2 * k] = opt[k][1].first;
        lo[2 * k + 1] = opt[k][1].second;
        hi[2 * k] = opt[k][0].first;
        hi[2 * k + 1] = opt[k][0].second;
    }
    throw std::invalid_argument("energy_target: cannot reach E0 = " + num(E0) + "; this construction spans [" +
                                num(product_energy(m, lo)) + ", " + num(product_energy(m, hi)) +
                                "] and guarantees |E0| <= " + num(N * m.h_min / 6.0));
}

std::vector<CVector> build_initial_sites(const std::string& spec, const Model& m, double E0, std::uint64_t seed) {
    static const std::regex re(R"((Y\+|Z_st2|step|energy_target)(\(([-+0-9.eE]+)\))?)");
    std::smatch mt;
    if (!std::regex_match(spec, mt, re))
        throw ConfigError("unknown initial state " + spec);
    const std::string kind = mt[1].str();
    const std::optional<double> arg = mt[3].matched ? std::optional<double>(std::stod(mt[3].str())) : std::nullopt;
    if (kind == "Y+")
        return y_plus_sites(m.N);
    if (kind == "Z_st2")
        return z_st2_sites(m.N);
    if (kind == "step")
        return step_sites(m, arg.value_or(0.5 * m.h_norm_max));
    return energy_target_sites(m, arg.value_or(E0), seed);
}

Mps build_initial_state(const std::string& spec, const Model& m, double E0, std::uint64_t seed) {
    return from_product(build_initial_sites(spec, m, E0, seed));
}

// ---- runs

namespace {

struct Job {
    int N = 0;
    std::vector<int> orders;
    std::vector<RunRecord> records;
};

fs::path run_dir(const fs::path& root, int N, int M) {
    return root / ("N" + std::to_string(N) + "_M" + std::to_string(M));
}

std::string rel_name(int N, int M) { return "N" + std::to_string(N) + "_M" + std::to_string(M); }

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary);
    os << s;
    if (!os)
        throw std::runtime_error("cannot write " + p.string());
}

int reference_site(const ExperimentConfig& cfg, int N) {
    if (cfg.initial_state == "Z_st2") {
        std::vector<int> bits(N);
        for (int n = 0; n < N; ++n)
            bits[n] = n % 4 < 2 ? 0 : 1;
        return pattern_reference_site(bits);
    }
    return central_site(N);
}

void write_correlations(const fs::path& p, const std::vector<Correlation>& c) {
    std::ostringstream os;
    os << "x,value\n";
    for (const auto& v : c)
        os << v.x << ',' << num(v.value) << '\n';
    write_text(p, os.str());
}

TraceRow exact_row(const CVector& v, const Model& m, int block_max, double eps) {
    const int N = m.N;
    TraceRow row;
    row.energy = exact_energy(v, m);
    row.variance = exact_variance(v, m);
    const Index left = Index(1) << (N / 2);
    const Eigen::Map<const Eigen::MatrixXcd> a(v.data(), left, v.size() / left);
    const Eigen::MatrixXcd gram = a.rows() <= a.cols() ? Eigen::MatrixXcd(a * a.adjoint()) : Eigen::MatrixXcd(a.adjoint() * a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram, Eigen::EigenvaluesOnly);
    SchmidtSpectrum sp;
    const double top = es.eigenvalues().maxCoeff();
    for (Index i = es.eigenvalues().size(); i-- > 0;)
        if (es.eigenvalues()(i) > 1e-28 * top)
            sp.values.push_back(std::sqrt(es.eigenvalues()(i)));
    sp = sp.normalized();
    row.s_half = entropy_bits(sp);
    row.d_tr = d_tr(sp, eps);
    row.max_bond = static_cast<Index>(sp.values.size());
    row.s_block.fill(std::numeric_limits<double>::quiet_NaN());
    for (int L = 1; L <= std::min({block_max, kBlockColumns, N}); ++L) {
        Eigen::SelfAdjointEigenSolver<CMatrix> ev(rdm(v, N, (N - L) / 2, L).rho, Eigen::EigenvaluesOnly);
        double S = 0.0;
        for (Index i = 0; i < ev.eigenvalues().size(); ++i) {
            const double p = ev.eigenvalues()(i);
            if (p > 1e-300)
                S -= p * std::log2(p);
        }
        row.s_block[L - 1] = std::max(S, 0.0);
    }
    return row;
}

void run_job(const ExperimentConfig& cfg, const fs::path& root, Job& job) {
    const int N = job.N;
    const Model m = build_model(cfg, N);
    const auto sites = build_initial_sites(cfg.initial_state, m, cfg.E0, cfg.seed);
    const Edges edges = spectrum_edges(m);
    const Rescaling r = make_rescaling(m, edges, cfg.E0, cfg.alpha);
    const int nc = reference_site(cfg, N);
    const int first = (N - cfg.L_c) / 2;

    auto finish = [&](RunRecord& rec, const FilterTrace& trace, const Mps* state, const DensityMatrix& rho) {
        rec.dir = run_dir(root, N, rec.M);
        fs::create_directories(rec.dir);
        std::ofstream tc(rec.dir / "trace.csv", std::ios::binary);
        write_trace_csv(trace, tc);
        rec.final_row = trace.rows.back();
        rec.trace_distance = trace_distance_inf_T(rho);
        json j;
        if (state) {
            save_mps(*state, rec.dir / "state.mps");
            write_correlations(rec.dir / "correlations.csv", energy_correlations(*state, m, nc));
            if (cfg.variational_sweeps > 0) {
                VarOpts vo;
                vo.D = cfg.d_max;
                vo.E0 = cfg.E0;
                vo.max_sweeps = cfg.variational_sweeps;
                vo.seed = cfg.seed;
                vo.timing = cfg.timing;
                Mps s0 = state->max_bond() > cfg.d_max ? compress(*state, cfg.d_max).state : *state;
                const VarResult vr = minimize_variance(s0, m, vo);
                std::ofstream vc(rec.dir / "variational.csv", std::ios::binary);
                write_cost_csv(vr.trace, vc);
                save_mps(vr.state, rec.dir / "variational.mps");
                rec.variational_variance = variance(vr.state, m);
                j["variational"] = {{"variance", *rec.variational_variance},
                                    {"lambda", vr.lambda},
                                    {"restarts", vr.restarts_used},
                                    {"diverged", vr.diverged},
                                    {"energy_constraint_met", vr.energy_constraint_met}};
            }
        }
        j["N"] = N;
        j["M"] = rec.M;
        j["status"] = "ok";
        j["reference_site"] = nc;
        j["discarded_weight"] = rec.discarded;
        j["trace_distance"] = rec.trace_distance;
        j["L_c"] = cfg.L_c;
        j["alpha"] = r.alpha;
        j["E_min"] = r.E_min;
        j["E_max"] = r.E_max;
        j["edges_converged"] = edges.converged;
        j["E0_in_range"] = r.in_range;
        j["truncation_dominated"] = trace.truncation_dominated;
        write_text(rec.dir / "run.json", j.dump(2) + "\n");
    };

    if (cfg.backend == Backend::mps) {
        FilterOptions fo;
        fo.d_max = cfg.d_max;
        fo.weight_tol = cfg.weight_tol;
        fo.record_every = cfg.record_every;
        fo.block_max = cfg.block_max;
        fo.timing = cfg.timing;
        fo.seed = cfg.seed;
        auto results = cheby_filter(from_product(sites), m, job.orders, r, fo);
        for (std::size_t i = 0; i < results.size(); ++i) {
            RunRecord& rec = job.records[i];
            rec.discarded = results[i].discarded_weight;
            finish(rec, results[i].trace, &results[i].state, rdm(results[i].state, first, cfg.L_c));
        }
    } else {
        const CVector p = product_vector(sites);
        const auto vs = exact_cheby_filter(p, m, job.orders, r);
        const TraceRow row0 = exact_row(p, m, cfg.block_max, 0.01);
        for (std::size_t i = 0; i < vs.size(); ++i) {
            RunRecord& rec = job.records[i];
            FilterTrace trace;
            trace.rows.push_back(row0);
            TraceRow last = exact_row(vs[i], m, cfg.block_max, 0.01);
            last.step = rec.M;
            trace.rows.push_back(last);
            std::optional<Mps> s;
            if (N <= 16)
                s = from_vector(vs[i], N);
            finish(rec, trace, s ? &*s : nullptr, rdm(vs[i], N, first, cfg.L_c));
        }
    }
}

json manifest_json(const ExperimentConfig& cfg, const std::vector<Job>& jobs, bool dry_run) {
    json j;
    json kv = json::object();
    std::istringstream is(format_config(cfg));
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find(" = ");
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    j["config"] = kv;
    j["dry_run"] = dry_run;
    json runs = json::array();
    for (const auto& job : jobs)
        for (const auto& rec : job.records)
            runs.push_back({{"N", rec.N},
                            {"M", rec.M},
                            {"dir", rel_name(rec.N, rec.M)},
                            {"status", dry_run ? std::string("planned") : rec.ok ? std::string("ok") : "failed"},
                            {"error", rec.error}});
    j["runs"] = runs;
    return j;
}

} // namespace

RunSummary run(const ExperimentConfig& cfg_in, const RunOptions& opts) {
    ExperimentConfig cfg = cfg_in;
    validate(cfg);
    const fs::path root = cfg.output;
    fs::create_directories(root);

    std::vector<Job> jobs;
    for (int N : cfg.N) {
        Job job;
        job.N = N;
        job.orders = resolve_schedule(cfg, N);
        for (int M : job.orders) {
            RunRecord rec;
            rec.N = N;
            rec.M = M;
            rec.dir = run_dir(root, N, M);
            job.records.push_back(rec);
        }
        jobs.push_back(std::move(job));
    }

    if (!opts.dry_run) {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < jobs.size(); i = next++) {
                try {
                    run_job(cfg, root, jobs[i]);
                } catch (const std::exception& e) {
                    for (auto& rec : jobs[i].records) {
                        rec.ok = false;
                        rec.error = e.what();
                        fs::create_directories(rec.dir);
                        json j{{"N", rec.N}, {"M", rec.M}, {"status", "failed"}, {"error", rec.error}};
                        write_text(rec.dir / "run.json", j.dump(2) + "\n");
                    }
                }
            }
        };
        const int width = std::min<int>(cfg.workers, static_cast<int>(jobs.size()));
        if (width <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < width; ++w)
                pool.emplace_back(worker);
            for (auto& t : pool)
                t.join();
        }
    }

    write_text(root / "manifest.json", manifest_json(cfg, jobs, opts.dry_run).dump(2) + "\n");
    RunSummary out;
    out.dir = root;
    for (auto& job : jobs)
        for (auto& rec : job.records)
            out.runs.push_back(rec);
    if (!opts.dry_run)
        analyze(root);
    return out;
}

std::string analyze(const fs::path& dir) {
    std::ifstream ms(dir / "manifest.json");
    if (!ms)
        throw std::runtime_error("analyze: no manifest.json in " + dir.string());
    const json manifest = json::parse(ms);
    std::map<int, std::vector<json>> by_n;
    for (const auto& r : manifest.at("runs")) {
        const int N = r.at("N");
        const int M = r.at("M");
        json entry{{"M", M}, {"status", r.at("status")}};
        const fs::path rd = dir / r.at("dir").get<std::string>();
        std::ifstream ts(rd / "trace.csv");
        std::ifstream js(rd / "run.json");
        if (ts && js) {
            const FilterTrace trace = read_trace_csv(ts);
            const json rj = json::parse(js);
            const TraceRow& last = trace.rows.back();
            entry["energy"] = last.energy;
            entry["variance"] = last.variance;
            entry["S_half"] = last.s_half;
            entry["D_tr"] = last.d_tr;
            entry["max_bond"] = last.max_bond;
            entry["discarded_weight"] = rj.value("discarded_weight", 0.0);
            entry["trace_distance"] = rj.value("trace_distance", 0.0);
            entry["truncation_dominated"] = trace.truncation_dominated;
            if (rj.contains("variational"))
                entry["variational_variance"] = rj["variational"]["variance"];
        }
        by_n[N].push_back(entry);
    }

    json summary;
    json per_n = json::array();
    for (auto& [N, runs] : by_n) {
        json jn;
        jn["N"] = N;
        jn["runs"] = runs;
        std::vector<Point> var_pts, ent_pts, dtr_pts;
        for (const auto& e : runs) {
            if (!e.contains("variance"))
                continue;
            const double v = e["variance"];
            if (e["discarded_weight"].get<double>() < 1e-4 && v > 0.0) {
                var_pts.push_back({static_cast<double>(e["M"].get<int>()), v});
                ent_pts.push_back({std::sqrt(v), std::exp2(e["S_half"].get<double>())});
                dtr_pts.push_back({std::sqrt(v), static_cast<double>(e["D_tr"].get<int>())});
            }
        }
        auto fit_json = [](auto&& fn, const std::vector<Point>& pts) -> json {
            try {
                const ScalingFit f = fn(std::span<const Point>(pts));
                return {{"form", f.form},
                        {"params", f.params},
                        {"errors", f.errors},
                        {"residual", f.residual},
                        {"n_points", f.n_points},
                        {"window", {f.window.first, f.window.second}}};
            } catch (const FitError& e) {
                return {{"error", e.what()}, {"n_points", pts.size()}};
            }
        };
        jn["variance_fit"] = fit_json(fit_power, var_pts);
        jn["entropy_fit"] = fit_json(fit_D0, ent_pts);
        jn["d_tr_fit"] = fit_json(fit_D0, dtr_pts);
        // findings only: D1 = 2, gamma = 1, fitted D0, 2 bits of slack
        if (jn["entropy_fit"].contains("params")) {
            const double D0 = jn["entropy_fit"]["params"][0];
            json checks = json::array();
            int violations = 0;
            for (const auto& e : runs) {
                if (!e.contains("variance") || e["variance"].get<double>() <= 0.0)
                    continue;
                const double rhs = bound_rhs_finite(N, std::sqrt(e["variance"].get<double>()), D0, 2.0, 1.0);
                json c{{"M", e["M"]}, {"S_half", e["S_half"]}};
                if (rhs > 0.0) {
                    const double limit = std::log2(rhs) + 2.0;
                    const bool holds = e["S_half"].get<double>() <= limit;
                    violations += !holds;
                    c["limit"] = limit;
                    c["holds"] = holds;
                } else {
                    c["limit"] = nullptr;
                }
                checks.push_back(c);
            }
            jn["entropy_bound"] = {{"D0", D0}, {"D1", 2.0}, {"gamma", 1.0}, {"violations", violations},
                                   {"runs", checks}};
        }
        per_n.push_back(jn);
    }
    summary["by_N"] = per_n;
    const std::string text = summary.dump(2) + "\n";
    write_text(dir / "summary.json", text);
    return text;
}

} // namespace chebmps
