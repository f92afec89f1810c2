#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace testing {

inline std::filesystem::path tmp_dir(const std::string& name)
{
    auto p = std::filesystem::path(EARPIPE_TEST_TMP) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Direct O(n^2) DFT bin power |X_k|^2.
inline double dft_power(const Eigen::VectorXd& x, Eigen::Index k)
{
    std::complex<double> acc{0.0, 0.0};
    const auto n = static_cast<double>(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j)
        acc += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * j) / n);
    return std::norm(acc);
}

inline Eigen::VectorXd sine(Eigen::Index n, double f, double rate, double amp = 1.0, double phase = 0.0)
{
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i)
        x[i] = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / rate + phase);
    return x;
}

inline Eigen::VectorXd white(Eigen::Index n, std::uint64_t seed, double sd = 1.0)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, sd);
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i)
        x[i] = d(rng);
    return x;
}

inline double rms(const Eigen::Ref<const Eigen::VectorXd>& x)
{
    return std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

inline double corr(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b)
{
    const Eigen::VectorXd ac = a.array() - a.mean();
    const Eigen::VectorXd bc = b.array() - b.mean();
    return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

} // namespace testing
