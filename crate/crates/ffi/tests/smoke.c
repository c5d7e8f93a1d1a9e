#include <math.h>
#include <stdio.h>

#include "mcpzone.h"

int main(void) {
    McpPoint pts[4] = {{0, 0}, {10, 0}, {0, 10}, {100, 100}};
    McpKdTree *tree = NULL;
    if (mcp_kdtree_new(pts, 4, &tree) != MCP_STATUS_OK) {
        return 1;
    }
    McpNeighbor hits[4];
    size_t n = 0;
    McpPoint q = {1, 1};
    if (mcp_kdtree_radius(tree, q, 15.0, hits, 4, &n) != MCP_STATUS_OK) {
        return 2;
    }
    size_t len = mcp_kdtree_len(tree);
    mcp_kdtree_free(tree);

    double f[6] = {1, 1, 1, 1, 1, 1};
    double w[6] = {10, 10, 10, 10, 10, 10};
    double score = 0;
    if (mcp_score_zone(f, w, &score) != MCP_STATUS_VALIDATION) {
        return 3;
    }
    char msg[128];
    if (mcp_last_error_message(msg, sizeof msg) == 0) {
        return 4;
    }
    printf("ok %zu %zu\n", len, n);
    return 0;
}
