double dot(const double *x, const double *y, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        s += x[i] * y[i];
    }
    return s;
}

int main() {
    double x[4] = {1, 2, 3, 4};
    double y[4] = {4, 3, 2, 1};
    return dot(x, y, 4) > 0 ? 0 : 1;
}
