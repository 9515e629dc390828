// ============================================================================
// common.hpp - Dense matrix/tensor containers, seeded RNG, error types and
// small utilities shared by every module.
// ============================================================================

#pragma once

#include <cblas.h>

#include <atomic>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

extern "C" void openblas_set_num_threads(int);

namespace trajstyle {

// ----------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: usage 1, data 2, numerical 3.
// ----------------------------------------------------------------------------
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

inline std::string strformat(const char* fmt, ...) {
    va_list ap;
    va_start(ap, fmt);
    char buf[1024];
    std::vsnprintf(buf, sizeof(buf), fmt, ap);
    va_end(ap);
    return std::string(buf);
}

inline void log_warn(const std::string& msg) {
    std::fprintf(stderr, "[warn] %s\n", msg.c_str());
}
inline void log_info(const std::string& msg) {
    std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

// ----------------------------------------------------------------------------
// Mat: row-major dense matrix of double.
// ----------------------------------------------------------------------------
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v((size_t)r * c, fill) {}

    double& at(int r, int c) { return v[(size_t)r * cols + c]; }
    double at(int r, int c) const { return v[(size_t)r * cols + c]; }
    double* row(int r) { return v.data() + (size_t)r * cols; }
    const double* row(int r) const { return v.data() + (size_t)r * cols; }
    size_t size() const { return v.size(); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

// Tensor3: (batch, channels, length), contiguous, length fastest.
struct Tensor3 {
    int b = 0;
    int c = 0;
    int l = 0;
    std::vector<double> v;

    Tensor3() = default;
    Tensor3(int b_, int c_, int l_, double fill = 0.0)
        : b(b_), c(c_), l(l_), v((size_t)b_ * c_ * l_, fill) {}

    double& at(int bi, int ci, int li) { return v[((size_t)bi * c + ci) * l + li]; }
    double at(int bi, int ci, int li) const { return v[((size_t)bi * c + ci) * l + li]; }
    double* chan(int bi, int ci) { return v.data() + ((size_t)bi * c + ci) * l; }
    const double* chan(int bi, int ci) const { return v.data() + ((size_t)bi * c + ci) * l; }
    size_t size() const { return v.size(); }

    bool same_shape(const Tensor3& o) const { return b == o.b && c == o.c && l == o.l; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

// ----------------------------------------------------------------------------
// matmul: C = alpha*op(A)*op(B) + beta*C, row-major. Single BLAS choke point;
// OpenBLAS is pinned to one thread so results are reproducible and worker
// threads at the episode/window level do not oversubscribe.
// ----------------------------------------------------------------------------
inline void matmul(const double* a, const double* b, double* c, int m, int k, int n,
                   bool trans_a = false, bool trans_b = false, double alpha = 1.0,
                   double beta = 0.0) {
    static std::once_flag once;
    std::call_once(once, [] { openblas_set_num_threads(1); });
    const int lda = trans_a ? m : k;
    const int ldb = trans_b ? k : n;
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta,
                c, n);
}

// ----------------------------------------------------------------------------
// Rng: mt19937_64 engine with hand-rolled uniform/normal draws so sequences
// do not depend on the standard library's distribution implementations.
// ----------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive integer range
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + (int64_t)(uniform() * (double)(hi - lo + 1));
    }

    // Box-Muller with cached second deviate
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i) {
            size_t j = (size_t)uniform_int(0, (int64_t)i - 1);
            std::swap(xs[i - 1], xs[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64, used as the documented seed-splitting rule: every parallel unit
// (episode, window, stage) derives its seed as seed_mix(master, ids...).
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t seed_mix(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = master;
    uint64_t h = splitmix64(s);
    s ^= a + 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(s);
    s ^= b + 0x7f4a7c15f39cc060ULL;
    h ^= splitmix64(s);
    s ^= c + 0x2545f4914f6cdd1dULL;
    return h ^ splitmix64(s);
}

// FNV-1a 64-bit, used for config hashes in run logs and manifests.
inline uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// 17 significant digits: lossless text round trip for IEEE doubles.
inline std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

// Static block partition over [0, n). Each index writes only its own outputs,
// so results are identical for any worker count.
inline void parallel_for(int n, int jobs, const std::function<void(int, int)>& fn) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs <= 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    for (int w = 0; w < jobs; ++w)
        workers.emplace_back([&, w] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) break;
                fn(i, w);
            }
        });
    for (auto& t : workers) t.join();
}

}  // namespace trajstyle
