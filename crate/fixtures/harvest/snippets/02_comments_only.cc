// Use a reduction for this:
// for (int i = 0; i < n; ++i) sum += a[i];
/* and remember to
   compile with -fopenmp */
