#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "qmts/errors.hpp"

namespace qmts {

// Exact rational time tag. Only the relative order of tags carries meaning,
// so exact comparison matters more than range; int64 numerators are plenty
// for desk-scale instances.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Rational() = default;
    Rational(std::int64_t n) : num(n), den(1) {}
    Rational(std::int64_t n, std::int64_t d) : num(n), den(d) { normalize(); }

    void normalize() {
        if (den == 0) throw Error("Rational: zero denominator");
        if (den < 0) {
            num = -num;
            den = -den;
        }
        std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    double value() const { return double(num) / double(den); }

    std::string str() const {
        if (den == 1) return std::to_string(num);
        return std::to_string(num) + "/" + std::to_string(den);
    }

    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num == b.num && a.den == b.den;
    }
    friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
    friend bool operator<(const Rational& a, const Rational& b) {
        return (__int128)a.num * b.den < (__int128)b.num * a.den;
    }
    friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
    friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

    friend Rational operator+(const Rational& a, const Rational& b) {
        return Rational(a.num * b.den + b.num * a.den, a.den * b.den);
    }
    friend Rational operator-(const Rational& a, const Rational& b) {
        return Rational(a.num * b.den - b.num * a.den, a.den * b.den);
    }
};

inline Rational midpoint(const Rational& a, const Rational& b) {
    return Rational(a.num * b.den + b.num * a.den, 2 * a.den * b.den);
}

}  // namespace qmts
