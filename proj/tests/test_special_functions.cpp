#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dirlap/special_functions.hpp"

using namespace dirlap;

namespace {

// |got - exp| <= rel * max(floor, |exp|): relative away from zero, absolute
// near it.
void check_close(double got, double expected, double rel, double floor = 1.0) {
  CAPTURE(got, expected, rel);
  REQUIRE(std::abs(got - expected) <= rel * std::max(floor, std::abs(expected)));
}

struct GammaRow {
  double x, lg, dg, tg;
};

// Reference values computed with 50-digit arithmetic, rounded to 21
// significant digits.
constexpr GammaRow kGammaTable[] = {
    {1e-06, 13.8155099807494316692, -1000000.57721401996867, 1000000000001.64493166},
    {0.001, 6.90717888538385368251, -1000.57557193181030047, 1000001.64253319586898},
    {0.045, 3.07674814019362485092, -22.7277554649773064645, 495.370126390680502632},
    {0.1, 2.25271265173420595987, -10.4237549404110767952, 101.433299150792758817},
    {0.25, 1.28802252469807745737, -4.22745353337626540809, 17.1973291545071107393},
    {0.5, 0.572364942924700087072, -1.96351002602142347944, 4.93480220054467930942},
    {1.0, 0.0, -0.577215664901532860607, 1.64493406684822643647},
    {1.461632, -0.121486290535839439879, -1.40281870010668543421e-7, 0.967672373820940493346},
    {2.0, 0.0, 0.422784335098467139393, 0.644934066848226436472},
    {3.7, 1.42807232666538792187, 1.16715353936151138587, 0.310037857670038319104},
    {8.5, 9.54926725730099771174, 2.0800908175794201214, 0.124838118918926021992},
    {10.0, 12.8018274800814696112, 2.25175258906672110765, 0.105166335681685746122},
    {25.0, 54.7847293981123191901, 3.19874251285197400853, 0.0408106632572255791874},
    {100.0, 359.134205369575398776, 4.6001618527380874002, 0.0100501666633335713952},
    {1234.5, 7550.55090107789489573, 7.11801623182799784331, 0.000810372727126966652695},
    {100000.0, 1051287.7089736568949, 11.5129204649618950868, 0.0000100000500001666666667},
    {1000000.0, 12815504.56914761166, 13.8155100579641907708, 0.00000100000050000016666667},
};

}  // namespace

TEST_CASE("lgamma matches the reference table", "[special]") {
  for (const auto& row : kGammaTable) check_close(sf::lgamma(row.x), row.lg, 1e-12);
}

TEST_CASE("digamma matches the reference table", "[special]") {
  for (const auto& row : kGammaTable) check_close(sf::digamma(row.x), row.dg, 1e-12);
}

TEST_CASE("trigamma matches the reference table", "[special]") {
  for (const auto& row : kGammaTable) check_close(sf::trigamma(row.x), row.tg, 1e-12);
}

TEST_CASE("lgamma agrees with libm on a log-spaced sweep", "[special]") {
  for (double lx = -6.0; lx <= 6.0; lx += 0.01) {
    const double x = std::pow(10.0, lx);
    check_close(sf::lgamma(x), std::lgamma(x), 5e-13);
  }
}

TEST_CASE("gamma-family recurrences hold", "[special]") {
  for (double x : {0.02, 0.3, 1.1, 2.7, 5.5, 7.9, 8.1, 33.0, 4321.0}) {
    check_close(sf::lgamma(x + 1.0) - sf::lgamma(x), std::log(x), 1e-11);
    check_close(sf::digamma(x + 1.0) - sf::digamma(x), 1.0 / x, 1e-11);
    check_close(sf::trigamma(x + 1.0) - sf::trigamma(x), -1.0 / (x * x), 1e-10);
  }
}

TEST_CASE("digamma is the derivative of lgamma (finite differences)", "[special]") {
  for (double x : {0.4, 1.3, 2.0, 6.5, 12.0, 250.0}) {
    const double h = 1e-6 * std::max(1.0, x);
    const double fd = (sf::lgamma(x + h) - sf::lgamma(x - h)) / (2 * h);
    check_close(fd, sf::digamma(x), 1e-7);
    const double fd2 = (sf::digamma(x + h) - sf::digamma(x - h)) / (2 * h);
    check_close(fd2, sf::trigamma(x), 1e-7);
  }
}

TEST_CASE("norm_cdf matches the reference table", "[special]") {
  const struct {
    double x, p;
  } table[] = {
      {-8.0, 6.22096057427178412352e-16},
      {-3.0, 0.00134989803163009452665},
      {-1.959963984540054, 0.0250000000000000137653},
      {-1.0, 0.158655253931457051415},
      {-0.5, 0.308537538725986896362},
      {0.0, 0.5},
      {0.5, 0.691462461274013103638},
      {1.0, 0.841344746068542948585},
      {1.959963984540054, 0.974999999999999986235},
      {3.0, 0.998650101968369905473},
      {8.0, 0.999999999999999377904},
  };
  for (const auto& row : table)
    check_close(sf::norm_cdf(row.x), row.p, 1e-13, 1e-16);
}

TEST_CASE("norm_quantile matches the reference table", "[special]") {
  const struct {
    double p, x;
  } table[] = {
      {0.001, -3.09023230616781354154},
      {0.025, -1.95996398454005423552},
      {0.1, -1.28155156554460046697},
      {0.5, 0.0},
      {0.9, 1.28155156554460046697},
      {0.975, 1.95996398454005423552},
      {0.999, 3.09023230616781354154},
  };
  for (const auto& row : table) check_close(sf::norm_quantile(row.p), row.x, 1e-12);
  REQUIRE(sf::norm_quantile(0.975) == Catch::Approx(1.959963984540054).epsilon(1e-15));
}

TEST_CASE("norm_quantile round-trips through norm_cdf", "[special]") {
  for (double p = 0.0005; p < 1.0; p += 0.0007)
    check_close(sf::norm_cdf(sf::norm_quantile(p)), p, 1e-11, 1e-6);
  for (double p : {1e-10, 1e-300, 1.0 - 1e-12})
    check_close(sf::norm_cdf(sf::norm_quantile(p)), p, 1e-8, 1e-305);
}

TEST_CASE("norm_quantile is antisymmetric", "[special]") {
  for (double p : {0.001, 0.07, 0.3, 0.49})
    check_close(sf::norm_quantile(p), -sf::norm_quantile(1.0 - p), 1e-12);
}

TEST_CASE("special function domain errors", "[special]") {
  REQUIRE_THROWS_AS(sf::lgamma(0.0), domain_error);
  REQUIRE_THROWS_AS(sf::lgamma(-1.5), domain_error);
  REQUIRE_THROWS_AS(sf::digamma(0.0), domain_error);
  REQUIRE_THROWS_AS(sf::digamma(-3.0), domain_error);
  REQUIRE_THROWS_AS(sf::trigamma(0.0), domain_error);
  REQUIRE_THROWS_AS(sf::trigamma(-0.25), domain_error);
  REQUIRE_THROWS_AS(sf::norm_quantile(0.0), domain_error);
  REQUIRE_THROWS_AS(sf::norm_quantile(1.0), domain_error);
  REQUIRE_THROWS_AS(sf::norm_quantile(-0.1), domain_error);
  REQUIRE_THROWS_AS(sf::norm_quantile(1.7), domain_error);
}
