#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "fixtures.hpp"
#include "lorafield/field.hpp"

using namespace lorafield;
using fixtures::naive_forward;

namespace {

DenseMatrix random_coords(std::size_t n, int dim, SeededRng& rng) {
    DenseMatrix c(n, dim);
    for (double& v : c.data()) v = rng.uniform(-1.0, 1.0);
    return c;
}

void randomize_up(AdapterSet& a, SeededRng& rng, double scale = 0.5) {
    for (auto& m : a.up)
        for (double& v : m.data()) v = rng.normal(0.0, scale * scale);
}

// Scalar probe J = sum(G .* output); dJ/doutput = G.
double probe_loss(const FieldArchitecture& arch, const FieldWeights& w, const AdapterSet* a,
                  const DenseMatrix& coords, const DenseMatrix& g) {
    DenseMatrix out = forward_batch(arch, w, a, coords);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += out.data()[i] * g.data()[i];
    return acc;
}

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-6});
}

} // namespace

TEST_CASE("frequency encoding ordering and values") {
    std::vector<double> zero = {0.0};
    auto e = frequency_encode(zero, 2);
    REQUIRE(e.size() == 4);
    CHECK(e[0] == 0.0);
    CHECK(e[1] == 1.0);
    CHECK(e[2] == 0.0);
    CHECK(e[3] == 1.0);

    std::vector<double> half_pi = {std::numbers::pi / 2.0};
    auto p = frequency_encode(half_pi, 1);
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(std::abs(p[1]) < 1e-12);

    std::vector<double> x3 = {0.1, -0.2, 0.3};
    CHECK(frequency_encode(x3, 6).size() == 36);

    // Batch encoding matches the scalar path.
    SeededRng rng(3);
    DenseMatrix coords = random_coords(5, 3, rng);
    DenseMatrix enc = encode_batch(coords, 4);
    for (std::size_t i = 0; i < 5; ++i) {
        std::vector<double> row(coords.row(i), coords.row(i) + 3);
        auto ref = frequency_encode(row, 4);
        for (std::size_t j = 0; j < ref.size(); ++j) CHECK(enc(i, j) == ref[j]);
    }
}

TEST_CASE("preset parameter counts and adapter budgets") {
    const auto sdf = FieldArchitecture::sdf_preset();
    const auto image = FieldArchitecture::image_preset();
    CHECK(count_params(sdf) == 272897);
    CHECK(count_params(image) == 340227);

    CHECK(count_adapter_params(sdf, 1) == 2597);
    CHECK(count_adapter_params(sdf, 4) == 9617);
    CHECK(count_adapter_params(sdf, 8) == 18977);
    CHECK(count_adapter_params(sdf, 16) == 37697);
    CHECK(count_adapter_params(sdf, 32) == 75137);
    CHECK(count_adapter_params(sdf, 64) == 141841);

    SeededRng rng(5);
    AdapterSet a = init_adapters(image, 64, rng);
    CHECK(a.effective_rank(0) == 40);                    // min(64, 2*2*10)
    CHECK(a.effective_rank(image.layer_count() - 1) == 3); // min(64, 256, 3)
    CHECK(count_params(a) == count_adapter_params(image, 64));

    AdapterSet a16 = init_adapters(sdf, 16, rng);
    CHECK(count_params(a16) == 37697);
}

TEST_CASE("identity network passes coordinates through") {
    FieldArchitecture arch{2, 0, 2, 0, 2, Activation::relu};
    FieldWeights w;
    w.weight = {DenseMatrix::identity(2), DenseMatrix::identity(2)};
    w.bias = {{0.0, 0.0}, {0.0, 0.0}};
    DenseMatrix coords(3, 2);
    coords(0, 0) = 0.25; coords(0, 1) = 0.75;
    coords(1, 0) = 0.0;  coords(1, 1) = 1.0;
    coords(2, 0) = 0.5;  coords(2, 1) = 0.125;
    DenseMatrix out = forward_batch(arch, w, nullptr, coords);
    for (std::size_t i = 0; i < coords.size(); ++i) CHECK(out.data()[i] == coords.data()[i]);
}

TEST_CASE("batched forward matches the naive reference") {
    SeededRng rng(7);
    FieldArchitecture arch{2, 3, 12, 2, 3, Activation::relu};
    FieldWeights w = init_base(arch, rng);
    AdapterSet a = init_adapters(arch, 4, rng);
    randomize_up(a, rng);
    DenseMatrix coords = random_coords(17, 2, rng);
    DenseMatrix out = forward_batch(arch, w, &a, coords);
    for (std::size_t i = 0; i < coords.rows(); ++i) {
        std::vector<double> x(coords.row(i), coords.row(i) + 2);
        auto ref = naive_forward(arch, w, &a, x);
        for (int c = 0; c < 3; ++c) CHECK(out(i, c) == doctest::Approx(ref[c]).epsilon(1e-12));
    }
}

TEST_CASE("fresh adapters are a bitwise no-op") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        SeededRng rng(seed);
        FieldArchitecture arch{3, 4, 16, 2, 2, Activation::relu};
        FieldWeights w = init_base(arch, rng);
        DenseMatrix coords = random_coords(64, 3, rng);
        DenseMatrix base_out = forward_batch(arch, w, nullptr, coords);
        for (int r : {1, 4, 16, 64}) {
            AdapterSet a = init_adapters(arch, r, rng);
            DenseMatrix adapted = forward_batch(arch, w, &a, coords);
            CHECK(adapted == base_out);
        }
    }
}

TEST_CASE("merged weights match attached adapters") {
    SeededRng rng(11);
    FieldArchitecture arch{2, 4, 16, 2, 3, Activation::relu};
    FieldWeights w = init_base(arch, rng);
    AdapterSet a = init_adapters(arch, 3, rng);
    randomize_up(a, rng);

    FieldWeights merged = merge_adapters(w, a);
    DenseMatrix coords = random_coords(1000, 2, rng);
    DenseMatrix attached = forward_batch(arch, w, &a, coords);
    DenseMatrix folded = forward_batch(arch, merged, nullptr, coords);
    for (std::size_t i = 0; i < attached.size(); ++i) {
        const double lhs = attached.data()[i], rhs = folded.data()[i];
        CHECK(std::abs(lhs - rhs) <= 1e-9 * (1.0 + std::abs(rhs)));
    }

    // Merging twice applies the update twice.
    FieldWeights twice = merge_adapters(merged, a);
    for (std::size_t l = 0; l < w.weight.size(); ++l) {
        DenseMatrix delta = scaled(matmul(a.up[l], a.down[l]), a.scale(static_cast<int>(l)));
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double want = w.weight[l].data()[i] + 2.0 * delta.data()[i];
            CHECK(twice.weight[l].data()[i] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("backward gradients match central finite differences") {
    const double h = 1e-5;
    for (std::uint64_t arch_seed : {101ull, 202ull, 303ull}) {
        SeededRng meta(arch_seed);
        FieldArchitecture arch{2, 2, static_cast<int>(4 + meta.next_below(12)),
                               static_cast<int>(meta.next_below(3)), 2, Activation::relu};

        // Pick a seed whose hidden pre-activations stay clear of the ReLU kink.
        FieldWeights w;
        AdapterSet a;
        DenseMatrix coords;
        bool found = false;
        for (std::uint64_t seed = 1; seed <= 40 && !found; ++seed) {
            SeededRng rng(arch_seed * 1000 + seed);
            w = init_base(arch, rng);
            a = init_adapters(arch, 2, rng);
            randomize_up(a, rng);
            coords = random_coords(8, 2, rng);
            double margin = 1e30;
            for (std::size_t i = 0; i < coords.rows(); ++i) {
                std::vector<double> x(coords.row(i), coords.row(i) + 2);
                naive_forward(arch, w, &a, x, &margin);
                naive_forward(arch, w, nullptr, x, &margin);
            }
            found = margin > 3e-4;
        }
        REQUIRE(found);

        SeededRng grng(arch_seed + 9);
        DenseMatrix g(coords.rows(), 2);
        for (double& v : g.data()) v = grng.uniform(-1.0, 1.0);

        auto fd_check = [&](double* param, double got) {
            const double saved = *param;
            *param = saved + h;
            const double plus = probe_loss(arch, w, &a, coords, g);
            *param = saved - h;
            const double minus = probe_loss(arch, w, &a, coords, g);
            *param = saved;
            const double fd = (plus - minus) / (2.0 * h);
            CHECK(rel_err(got, fd) < 1e-4);
        };

        ForwardTrace trace;
        forward_batch(arch, w, &a, coords, &trace);

        SUBCASE("full mode") {
            GradientSet grads = backward_batch(arch, w, &a, trace, g, Trainable::full);
            for (int l = 0; l < arch.layer_count(); ++l) {
                for (std::size_t i = 0; i < w.weight[l].size(); ++i)
                    fd_check(&w.weight[l].data()[i], grads.weight[l].data()[i]);
                for (std::size_t i = 0; i < w.bias[l].size(); ++i)
                    fd_check(&w.bias[l][i], grads.bias[l][i]);
            }
        }
        SUBCASE("adapters_only mode") {
            GradientSet grads = backward_batch(arch, w, &a, trace, g, Trainable::adapters_only);
            for (int l = 0; l < arch.layer_count(); ++l) {
                for (std::size_t i = 0; i < a.down[l].size(); ++i)
                    fd_check(&a.down[l].data()[i], grads.down[l].data()[i]);
                for (std::size_t i = 0; i < a.up[l].size(); ++i)
                    fd_check(&a.up[l].data()[i], grads.up[l].data()[i]);
            }
        }
    }
}

TEST_CASE("adapter gradients at zero-init: up nonzero, down zero") {
    SeededRng rng(31);
    FieldArchitecture arch{2, 3, 8, 1, 2, Activation::relu};
    FieldWeights w = init_base(arch, rng);
    AdapterSet a = init_adapters(arch, 2, rng); // up is zero
    DenseMatrix coords = random_coords(16, 2, rng);
    ForwardTrace trace;
    forward_batch(arch, w, &a, coords, &trace);
    DenseMatrix g(16, 2, 1.0);
    GradientSet grads = backward_batch(arch, w, &a, trace, g, Trainable::adapters_only);
    double up_norm = 0.0;
    for (const auto& m : grads.up) up_norm += frobenius_norm(m);
    CHECK(up_norm > 1e-6);
    for (const auto& m : grads.down)
        for (double v : m.data()) CHECK(v == 0.0);
}

TEST_CASE("zero upstream gradient yields zero gradients") {
    SeededRng rng(32);
    FieldArchitecture arch{2, 2, 8, 1, 1, Activation::relu};
    FieldWeights w = init_base(arch, rng);
    DenseMatrix coords = random_coords(10, 2, rng);
    ForwardTrace trace;
    forward_batch(arch, w, nullptr, coords, &trace);
    GradientSet grads = backward_batch(arch, w, nullptr, trace, DenseMatrix(10, 1), Trainable::full);
    for (const auto& m : grads.weight)
        for (double v : m.data()) CHECK(v == 0.0);
    for (const auto& b : grads.bias)
        for (double v : b) CHECK(v == 0.0);
}

TEST_CASE("backward requires a matching activation cache") {
    SeededRng rng(33);
    FieldArchitecture arch{2, 2, 8, 1, 1, Activation::relu};
    FieldWeights w = init_base(arch, rng);
    ForwardTrace empty;
    CHECK_THROWS_AS(backward_batch(arch, w, nullptr, empty, DenseMatrix(4, 1), Trainable::full),
                    StateError);
}

TEST_CASE("base initialization is deterministic with the documented statistics") {
    FieldArchitecture arch{2, 5, 256, 1, 3, Activation::relu};
    SeededRng r1(77), r2(77);
    FieldWeights a = init_base(arch, r1);
    FieldWeights b = init_base(arch, r2);
    for (std::size_t l = 0; l < a.weight.size(); ++l) CHECK(a.weight[l] == b.weight[l]);

    for (const auto& bias : a.bias)
        for (double v : bias) CHECK(v == 0.0);

    // Hidden layer fan-in 256: sample variance within 10% of 2/256.
    const DenseMatrix& hidden = a.weight[1];
    double mean = 0.0;
    for (double v : hidden.data()) mean += v;
    mean /= static_cast<double>(hidden.size());
    double var = 0.0;
    for (double v : hidden.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(hidden.size() - 1);
    CHECK(var == doctest::Approx(2.0 / 256.0).epsilon(0.10));
}

TEST_CASE("low-rank update has rank at most r_eff") {
    SeededRng rng(41);
    FieldArchitecture arch{2, 2, 16, 1, 16, Activation::relu};
    AdapterSet a = init_adapters(arch, 2, rng);
    randomize_up(a, rng, 1.0);
    for (int l = 0; l < arch.layer_count(); ++l) {
        DenseMatrix delta = scaled(matmul(a.up[l], a.down[l]), a.scale(l));
        SvdResult s = svd(delta);
        const int r_eff = a.effective_rank(l);
        REQUIRE(static_cast<std::size_t>(r_eff) < s.sigma.size());
        CHECK(s.sigma[r_eff] < 1e-10 * std::max(s.sigma[0], 1e-300));
    }
}

TEST_CASE("forward flags out-of-domain coordinates") {
    SeededRng rng(42);
    FieldArchitecture arch{2, 2, 8, 0, 1, Activation::relu};
    FieldWeights w = init_base(arch, rng);
    DenseMatrix coords(3, 2);
    coords(0, 0) = 0.5; coords(0, 1) = -0.5;
    coords(1, 0) = 1.5; coords(1, 1) = 0.0;
    coords(2, 0) = -2.0; coords(2, 1) = 0.25;
    ForwardTrace trace;
    forward_batch(arch, w, nullptr, coords, &trace);
    CHECK(trace.out_of_domain == 2);
}
