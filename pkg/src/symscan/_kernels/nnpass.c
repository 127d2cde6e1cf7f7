#include "nnpass.h"

#include <math.h>
#include <stdint.h>

/* One SIMD variant is selected at compile time; all variants implement the
 * same contract: squared distances in double precision, ties broken toward
 * the lowest B index. */

#if defined(__AVX512F__)
#include <immintrin.h>

double symscan_nn_pass(const double *ax, const double *ay, const double *az, int n,
                       const double *bx, const double *by, const double *bz, int m,
                       int *corr, double *colmin)
{
    double fwd = 0.0, bwd = 0.0;
    const int m8 = m - (m % 8);
    for (int j = 0; j < m; j++) colmin[j] = INFINITY;
    for (int i = 0; i < n; i++) {
        const __m512d px = _mm512_set1_pd(ax[i]);
        const __m512d py = _mm512_set1_pd(ay[i]);
        const __m512d pz = _mm512_set1_pd(az[i]);
        __m512d vmin = _mm512_set1_pd(INFINITY);
        __m512i vidx = _mm512_setzero_si512();
        __m512i jcur = _mm512_set_epi64(7, 6, 5, 4, 3, 2, 1, 0);
        const __m512i jstep = _mm512_set1_epi64(8);
        for (int j = 0; j < m8; j += 8) {
            __m512d dx = _mm512_sub_pd(px, _mm512_loadu_pd(bx + j));
            __m512d dy = _mm512_sub_pd(py, _mm512_loadu_pd(by + j));
            __m512d dz = _mm512_sub_pd(pz, _mm512_loadu_pd(bz + j));
            __m512d d = _mm512_fmadd_pd(dx, dx, _mm512_fmadd_pd(dy, dy, _mm512_mul_pd(dz, dz)));
            __m512d cm = _mm512_loadu_pd(colmin + j);
            _mm512_storeu_pd(colmin + j, _mm512_min_pd(cm, d));
            __mmask8 lt = _mm512_cmp_pd_mask(d, vmin, _CMP_LT_OQ);
            vmin = _mm512_mask_blend_pd(lt, vmin, d);
            vidx = _mm512_mask_blend_epi64(lt, vidx, jcur);
            jcur = _mm512_add_epi64(jcur, jstep);
        }
        double lanev[8];
        int64_t lanei[8];
        _mm512_storeu_pd(lanev, vmin);
        _mm512_storeu_si512((__m512i *)lanei, vidx);
        double rmin = INFINITY;
        int64_t best = 0;
        for (int l = 0; l < 8; l++) {
            /* each lane holds its earliest minimizer; resolve cross-lane ties
             * toward the smallest global index */
            if (lanev[l] < rmin || (lanev[l] == rmin && lanei[l] < best)) {
                rmin = lanev[l];
                best = lanei[l];
            }
        }
        for (int j = m8; j < m; j++) {
            const double dx = ax[i] - bx[j], dy = ay[i] - by[j], dz = az[i] - bz[j];
            const double d = dx * dx + dy * dy + dz * dz;
            if (d < colmin[j]) colmin[j] = d;
            if (d < rmin) { rmin = d; best = j; }
        }
        corr[i] = (int)best;
        fwd += rmin;
    }
    for (int j = 0; j < m; j++) bwd += colmin[j];
    return fwd / n + bwd / m;
}

#elif defined(__AVX2__)
#include <immintrin.h>

double symscan_nn_pass(const double *ax, const double *ay, const double *az, int n,
                       const double *bx, const double *by, const double *bz, int m,
                       int *corr, double *colmin)
{
    double fwd = 0.0, bwd = 0.0;
    const int m4 = m - (m % 4);
    for (int j = 0; j < m; j++) colmin[j] = INFINITY;
    for (int i = 0; i < n; i++) {
        const __m256d px = _mm256_set1_pd(ax[i]);
        const __m256d py = _mm256_set1_pd(ay[i]);
        const __m256d pz = _mm256_set1_pd(az[i]);
        __m256d vmin = _mm256_set1_pd(INFINITY);
        __m256i vidx = _mm256_setzero_si256();
        __m256i jcur = _mm256_set_epi64x(3, 2, 1, 0);
        const __m256i jstep = _mm256_set1_epi64x(4);
        for (int j = 0; j < m4; j += 4) {
            __m256d dx = _mm256_sub_pd(px, _mm256_loadu_pd(bx + j));
            __m256d dy = _mm256_sub_pd(py, _mm256_loadu_pd(by + j));
            __m256d dz = _mm256_sub_pd(pz, _mm256_loadu_pd(bz + j));
            __m256d d = _mm256_fmadd_pd(dx, dx, _mm256_fmadd_pd(dy, dy, _mm256_mul_pd(dz, dz)));
            __m256d cm = _mm256_loadu_pd(colmin + j);
            _mm256_storeu_pd(colmin + j, _mm256_min_pd(cm, d));
            __m256d lt = _mm256_cmp_pd(d, vmin, _CMP_LT_OQ);
            vmin = _mm256_blendv_pd(vmin, d, lt);
            vidx = _mm256_castpd_si256(
                _mm256_blendv_pd(_mm256_castsi256_pd(vidx), _mm256_castsi256_pd(jcur), lt));
            jcur = _mm256_add_epi64(jcur, jstep);
        }
        double lanev[4];
        int64_t lanei[4];
        _mm256_storeu_pd(lanev, vmin);
        _mm256_storeu_si256((__m256i *)lanei, vidx);
        double rmin = INFINITY;
        int64_t best = 0;
        for (int l = 0; l < 4; l++) {
            if (lanev[l] < rmin || (lanev[l] == rmin && lanei[l] < best)) {
                rmin = lanev[l];
                best = lanei[l];
            }
        }
        for (int j = m4; j < m; j++) {
            const double dx = ax[i] - bx[j], dy = ay[i] - by[j], dz = az[i] - bz[j];
            const double d = dx * dx + dy * dy + dz * dz;
            if (d < colmin[j]) colmin[j] = d;
            if (d < rmin) { rmin = d; best = j; }
        }
        corr[i] = (int)best;
        fwd += rmin;
    }
    for (int j = 0; j < m; j++) bwd += colmin[j];
    return fwd / n + bwd / m;
}

#else

double symscan_nn_pass(const double *ax, const double *ay, const double *az, int n,
                       const double *bx, const double *by, const double *bz, int m,
                       int *corr, double *colmin)
{
    double fwd = 0.0, bwd = 0.0;
    for (int j = 0; j < m; j++) colmin[j] = INFINITY;
    for (int i = 0; i < n; i++) {
        const double px = ax[i], py = ay[i], pz = az[i];
        double rmin = INFINITY;
        int best = 0;
        for (int j = 0; j < m; j++) {
            const double dx = px - bx[j], dy = py - by[j], dz = pz - bz[j];
            const double d = dx * dx + dy * dy + dz * dz;
            if (d < colmin[j]) colmin[j] = d;
            if (d < rmin) { rmin = d; best = j; }
        }
        corr[i] = best;
        fwd += rmin;
    }
    for (int j = 0; j < m; j++) bwd += colmin[j];
    return fwd / n + bwd / m;
}

#endif
