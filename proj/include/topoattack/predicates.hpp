#pragma once

#include <gmpxx.h>

#include "topoattack/common.hpp"

namespace topoattack {

// Filtered geometric predicates: evaluate in double with a conservative
// forward error bound and fall back to exact rational arithmetic when the
// result is too close to zero to trust. The returned sign is always the
// exact sign; 0 means a true degeneracy.

namespace detail {

inline int sign_of(double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); }

inline int exact_orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const mpq_class dx(d.x()), dy(d.y()), dz(d.z());
    mpq_class ax(a.x()), ay(a.y()), az(a.z());
    mpq_class bx(b.x()), by(b.y()), bz(b.z());
    mpq_class cx(c.x()), cy(c.y()), cz(c.z());
    ax -= dx; ay -= dy; az -= dz;
    bx -= dx; by -= dy; bz -= dz;
    cx -= dx; cy -= dy; cz -= dz;
    const mpq_class det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx);
    return sgn(det);
}

inline int exact_insphere(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
    mpq_class px[4], py[4], pz[4], plift[4];
    const Vec3* pts[4] = {&a, &b, &c, &d};
    for (int i = 0; i < 4; ++i) {
        px[i] = mpq_class(pts[i]->x()) - mpq_class(e.x());
        py[i] = mpq_class(pts[i]->y()) - mpq_class(e.y());
        pz[i] = mpq_class(pts[i]->z()) - mpq_class(e.z());
        plift[i] = px[i] * px[i] + py[i] * py[i] + pz[i] * pz[i];
    }
    // Laplace expansion along the lifted column. The explicit return type
    // matters: gmpxx expression templates must not outlive their operands.
    auto det3 = [&](int r0, int r1, int r2) -> mpq_class {
        return px[r0] * (py[r1] * pz[r2] - pz[r1] * py[r2]) -
               py[r0] * (px[r1] * pz[r2] - pz[r1] * px[r2]) +
               pz[r0] * (px[r1] * py[r2] - py[r1] * px[r2]);
    };
    const mpq_class det = -plift[0] * det3(1, 2, 3) + plift[1] * det3(0, 2, 3) -
                          plift[2] * det3(0, 1, 3) + plift[3] * det3(0, 1, 2);
    return sgn(det);
}

}  // namespace detail

// Sign of det[a-d; b-d; c-d]. Positive means the tetrahedron (a,b,c,d) is
// positively oriented in the convention expected by insphere().
inline int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const double adx = a.x() - d.x(), ady = a.y() - d.y(), adz = a.z() - d.z();
    const double bdx = b.x() - d.x(), bdy = b.y() - d.y(), bdz = b.z() - d.z();
    const double cdx = c.x() - d.x(), cdy = c.y() - d.y(), cdz = c.z() - d.z();

    const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
    const double cdxady = cdx * ady, adxcdy = adx * cdy;
    const double adxbdy = adx * bdy, bdxady = bdx * ady;

    const double det = adz * (bdxcdy - cdxbdy) + bdz * (cdxady - adxcdy) + cdz * (adxbdy - bdxady);
    const double permanent = (std::abs(bdxcdy) + std::abs(cdxbdy)) * std::abs(adz) +
                             (std::abs(cdxady) + std::abs(adxcdy)) * std::abs(bdz) +
                             (std::abs(adxbdy) + std::abs(bdxady)) * std::abs(cdz);
    const double errbound = 1e-14 * permanent;
    if (det > errbound) return 1;
    if (det < -errbound) return -1;
    return detail::exact_orient3d(a, b, c, d);
}

// Sign of the 4x4 lifted determinant. For a positively oriented (a,b,c,d),
// positive means e lies strictly inside the circumsphere.
inline int insphere(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
    const double aex = a.x() - e.x(), aey = a.y() - e.y(), aez = a.z() - e.z();
    const double bex = b.x() - e.x(), bey = b.y() - e.y(), bez = b.z() - e.z();
    const double cex = c.x() - e.x(), cey = c.y() - e.y(), cez = c.z() - e.z();
    const double dex = d.x() - e.x(), dey = d.y() - e.y(), dez = d.z() - e.z();

    const double aexbey = aex * bey, bexaey = bex * aey;
    const double bexcey = bex * cey, cexbey = cex * bey;
    const double cexdey = cex * dey, dexcey = dex * cey;
    const double dexaey = dex * aey, aexdey = aex * dey;
    const double aexcey = aex * cey, cexaey = cex * aey;
    const double bexdey = bex * dey, dexbey = dex * bey;

    const double ab = aexbey - bexaey;
    const double bc = bexcey - cexbey;
    const double cd = cexdey - dexcey;
    const double da = dexaey - aexdey;
    const double ac = aexcey - cexaey;
    const double bd = bexdey - dexbey;

    const double abc = aez * bc - bez * ac + cez * ab;
    const double bcd = bez * cd - cez * bd + dez * bc;
    const double cda = cez * da + dez * ac + aez * cd;
    const double dab = dez * ab + aez * bd + bez * da;

    const double alift = aex * aex + aey * aey + aez * aez;
    const double blift = bex * bex + bey * bey + bez * bez;
    const double clift = cex * cex + cey * cey + cez * cez;
    const double dlift = dex * dex + dey * dey + dez * dez;

    const double det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd);

    const double abp = std::abs(aexbey) + std::abs(bexaey);
    const double bcp = std::abs(bexcey) + std::abs(cexbey);
    const double cdp = std::abs(cexdey) + std::abs(dexcey);
    const double dap = std::abs(dexaey) + std::abs(aexdey);
    const double acp = std::abs(aexcey) + std::abs(cexaey);
    const double bdp = std::abs(bexdey) + std::abs(dexbey);
    const double abcp = std::abs(aez) * bcp + std::abs(bez) * acp + std::abs(cez) * abp;
    const double bcdp = std::abs(bez) * cdp + std::abs(cez) * bdp + std::abs(dez) * bcp;
    const double cdap = std::abs(cez) * dap + std::abs(dez) * acp + std::abs(aez) * cdp;
    const double dabp = std::abs(dez) * abp + std::abs(aez) * bdp + std::abs(bez) * dap;
    const double permanent = dlift * abcp + clift * dabp + blift * cdap + alift * bcdp;

    const double errbound = 2e-14 * permanent;
    if (det > errbound) return 1;
    if (det < -errbound) return -1;
    return detail::exact_insphere(a, b, c, d, e);
}

}  // namespace topoattack
