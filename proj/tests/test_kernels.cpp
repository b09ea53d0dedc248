#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <string>
#include <limits>
#include <vector>

#include "graspcount/kernels.hpp"
#include "graspcount/nn.hpp"
#include "graspcount/rng.hpp"

using namespace graspcount;
namespace k = graspcount::kernels;

namespace {

std::vector<const k::KernelTable*> variants() {
    std::vector<const k::KernelTable*> v;
    if (auto* t = k::avx2_table()) v.push_back(t);
    if (auto* t = k::neon_table()) v.push_back(t);
    return v;
}

struct RestoreIsa {
    k::Isa saved = k::active().isa;
    ~RestoreIsa() { k::select(saved); }
};

}  // namespace

TEST_CASE("environment override picks the kernel table") {
    const char* env = std::getenv("GRASPCOUNT_SIMD");
    if (env && std::string(env) == "scalar") CHECK(k::active().isa == k::Isa::scalar);
    if (!env && k::avx2_table()) CHECK(k::active().isa == k::Isa::avx2);
}

TEST_CASE("scalar table is always available") {
    CHECK(k::scalar_table().isa == k::Isa::scalar);
    CHECK(k::select(k::Isa::scalar));
    CHECK(k::active().isa == k::Isa::scalar);
    RestoreIsa r;
}

TEST_CASE("vector kernels agree with the scalar reference") {
    const auto vs = variants();
    if (vs.empty()) MESSAGE("no SIMD variant on this machine; only the scalar path is exercised");
    Rng rng(99);
    const double eps = std::numeric_limits<double>::epsilon();
    for (const auto* t : vs) {
        INFO("isa " << k::to_string(t->isa));
        for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 17u, 31u, 64u, 100u, 1023u}) {
            std::vector<double> a(n), b(n), y(n);
            double mag = 0;
            for (std::size_t i = 0; i < n; ++i) {
                a[i] = rng.normal();
                b[i] = rng.normal();
                y[i] = rng.normal();
                mag += std::abs(a[i] * b[i]);
            }
            const double ref = k::scalar_table().dot(a.data(), b.data(), n);
            const double got = t->dot(a.data(), b.data(), n);
            CHECK(std::abs(ref - got) <= 2.0 * n * eps * mag + 1e-300);

            auto y_ref = y, y_got = y;
            k::scalar_table().axpy(0.37, a.data(), y_ref.data(), n);
            t->axpy(0.37, a.data(), y_got.data(), n);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(std::abs(y_ref[i] - y_got[i]) <= 2 * eps * (std::abs(y[i]) + std::abs(0.37 * a[i])));
            }
        }
    }
}

TEST_CASE("network outputs do not depend on the kernel variant") {
    const auto vs = variants();
    RestoreIsa restore;
    nn::Model m(nn::Shape::vector(24), {nn::LayerSpec::reshape({6, 4, 1}), nn::LayerSpec::conv2d(5),
                                        nn::LayerSpec::relu(), nn::LayerSpec::flatten(), nn::LayerSpec::dense(7),
                                        nn::LayerSpec::softmax()});
    m.init(4);
    Rng rng(1);
    nn::Matrix x(9, 24);
    for (auto& v : x.data) v = rng.uniform();
    k::select(k::Isa::scalar);
    const auto ref = nn::forward(m, x);
    for (const auto* t : vs) {
        k::select(t->isa);
        const auto got = nn::forward(m, x);
        for (std::size_t i = 0; i < ref.data.size(); ++i) CHECK(std::abs(ref.data[i] - got.data[i]) < 1e-13);
    }
}
