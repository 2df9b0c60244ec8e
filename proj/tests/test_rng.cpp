#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "gapl/rng.hpp"

using namespace gapl;

TEST_CASE("splitmix64 matches the reference sequence") {
    std::uint64_t s = 1234567;
    const std::uint64_t expect[] = {6457827717110365317ULL, 3203168211198807973ULL, 9817491932198370423ULL,
                                    4593380528125082431ULL, 16408922859458223821ULL};
    for (auto e : expect) CHECK(splitmix64(s) == e);
}

// Expected values from an independent Python transcription of xoshiro256**.
TEST_CASE("xoshiro256** stream for fixed seeds") {
    Rng a(42);
    CHECK(a.next() == 1546998764402558742ULL);
    CHECK(a.next() == 6990951692964543102ULL);
    CHECK(a.next() == 12544586762248559009ULL);
    CHECK(a.next() == 17057574109182124193ULL);

    Rng z(0);
    CHECK(z.next() == 11091344671253066420ULL);
    CHECK(z.next() == 13793997310169335082ULL);
}

TEST_CASE("uniform uses the top 53 bits") {
    Rng r(7);
    CHECK(r.uniform() == 0.7005764821796896);
    CHECK(r.uniform() == 0.2787512294737843);
    CHECK(r.uniform() == 0.8396274618764198);
}

TEST_CASE("below is a multiply-shift reduction") {
    Rng r(7);
    const std::uint64_t expect[] = {7, 2, 8, 9, 9, 8, 0, 1};
    for (auto e : expect) CHECK(r.below(10) == e);
}

TEST_CASE("same seed, same stream; derived streams differ") {
    Rng a(99), b(99);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());

    Rng s1 = Rng::derive(5, 1), s2 = Rng::derive(5, 2), s1b = Rng::derive(5, 1);
    CHECK(s1.state() == s1b.state());
    CHECK(s1.state() != s2.state());
    CHECK(Rng::derive(5, 1).state() != Rng::derive(6, 1).state());
}

TEST_CASE("normal draws have roughly unit moments and consume two uniforms") {
    Rng r(3);
    const int n = 200000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.01);

    Rng p(11), q(11);
    p.normal();
    q.next();
    q.next();
    CHECK(p.state() == q.state());
}

TEST_CASE("shuffle yields a permutation and depends on the seed") {
    std::vector<int> v(50), w(50);
    std::iota(v.begin(), v.end(), 0);
    w = v;
    Rng a(1), b(2);
    a.shuffle(std::span(v));
    b.shuffle(std::span(w));
    CHECK(v != w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}
