/* Build: cc solve_mpc.c -I../include -L../../../target/release -ldspdhg_ffi -lm -lpthread -ldl */
#include <stdio.h>
#include "dspdhg.h"

int main(void) {
    DspdhgProblem *p = NULL;
    if (dspdhg_problem_gen_mpc(4, 2, 5, 7, &p) != DSPDHG_STATUS_OK) {
        fprintf(stderr, "gen: %s\n", dspdhg_last_error());
        return 1;
    }
    DspdhgOptions o = dspdhg_options_default();
    o.p = 0.5;
    o.q = 0.6;
    o.max_cost = 2000.0;
    o.target_relkkt = 1e-8;
    o.restart = DSPDHG_RESTART_ADAPTIVE;

    DspdhgResult *r = NULL;
    DspdhgStatus s = dspdhg_solve(p, &o, &r);
    if (s != DSPDHG_STATUS_OK && s != DSPDHG_STATUS_BUDGET_EXHAUSTED) {
        fprintf(stderr, "solve: %s\n", dspdhg_last_error());
        dspdhg_problem_free(p);
        return 1;
    }
    printf("status %d relkkt %.3e cost %.1f restarts %llu\n", (int)s, dspdhg_result_relkkt(r),
           dspdhg_result_cost_units(r), (unsigned long long)dspdhg_result_restarts(r));
    dspdhg_result_free(r);
    dspdhg_problem_free(p);
    return 0;
}
