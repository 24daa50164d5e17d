#include <assert.h>
#include <pthread.h>
#include <stdio.h>

#include "elastic2d.h"

#define THREADS 4
#define PER_THREAD 20000

static E2dStructure *shared;

static void *worker(void *arg) {
    uint64_t id = (uint64_t)(uintptr_t)arg;
    E2dHandle *h = NULL;
    assert(e2d_handle_create(id, true, &h) == E2D_STATUS_OK);
    for (uint64_t i = 0; i < PER_THREAD; i++) {
        assert(e2d_insert(shared, h, (id << 32) | i) == E2D_STATUS_OK);
    }
    e2d_handle_destroy(h);
    return NULL;
}

int main(void) {
    E2dStructure *bad = NULL;
    assert(e2d_create(E2D_KIND_LPW_STACK, 8, 4, 1, &bad) == E2D_STATUS_INVALID_ARGUMENT);
    assert(bad == NULL);

    E2dKind kinds[] = {E2D_KIND_LAW_QUEUE, E2D_KIND_LPW_QUEUE, E2D_KIND_LPW_STACK};
    for (int k = 0; k < 3; k++) {
        assert(e2d_create(kinds[k], 16, 4, 4, &shared) == E2D_STATUS_OK);
        pthread_t t[THREADS];
        for (uintptr_t i = 0; i < THREADS; i++) pthread_create(&t[i], NULL, worker, (void *)i);
        for (int i = 0; i < THREADS; i++) pthread_join(t[i], NULL);

        size_t len = 0;
        assert(e2d_len(shared, &len) == E2D_STATUS_OK && len == THREADS * PER_THREAD);
        static unsigned char seen[THREADS][PER_THREAD];
        for (int i = 0; i < THREADS; i++)
            for (int j = 0; j < PER_THREAD; j++) seen[i][j] = 0;
        uint64_t v;
        size_t n = 0;
        while (e2d_remove(shared, NULL, &v) == E2D_STATUS_OK) {
            assert(!seen[v >> 32][v & 0xffffffff]);
            seen[v >> 32][v & 0xffffffff] = 1;
            n++;
        }
        assert(n == THREADS * PER_THREAD);
        assert(e2d_remove(shared, NULL, &v) == E2D_STATUS_EMPTY);

        E2dWindowInfo info;
        assert(e2d_window_info(shared, &info) == E2D_STATUS_OK);
        assert(info.insert_width >= 1);
        e2d_destroy(shared);
    }
    printf("%s\n", e2d_status_str(E2D_STATUS_OK));
    return 0;
}
