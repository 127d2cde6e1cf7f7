#ifndef SYMSCAN_NNPASS_H
#define SYMSCAN_NNPASS_H

/* Fused nearest-neighbor pass between two point clouds in SoA layout.
 *
 * For every point i of A finds the index of its nearest point in B
 * (first index on exact ties) and accumulates the two-sided mean of
 * squared nearest-neighbor distances.  colmin is scratch of length m.
 * Returns the two-sided value; corr receives the A->B correspondences.
 */
double symscan_nn_pass(const double *ax, const double *ay, const double *az, int n,
                       const double *bx, const double *by, const double *bz, int m,
                       int *corr, double *colmin);

#endif
