#include <stdio.h>
#include "tensor_bellman.h"

int main(void) {
    size_t idx[] = {0, 0, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1};
    double vals[] = {1.0, -0.25, -0.25, 1.0};
    TbTensor *t = NULL;
    if (tb_tensor_new(3, 2, 4, idx, vals, &t) != TB_STATUS_OK) {
        fprintf(stderr, "%s\n", tb_last_error_message());
        return 1;
    }
    double b[] = {0.75, 0.75}, x[2];
    size_t its = 0;
    double res = 0.0;
    TbStatus s = tb_solve(t, b, 2, TB_METHOD_NEWTON, x, &its, &res);
    printf("status %d x = (%g, %g) iterations %zu\n", (int)s, x[0], x[1], its);
    tb_tensor_free(t);
    return s == TB_STATUS_OK ? 0 : 1;
}
