"""Independent reference implementations shared by the tests."""


def has_cycle(A):
    # iterative three-colour DFS over edges j -> i for A[i, j] > 0
    n = len(A)
    succ = [[i for i in range(n) if A[i, j] > 0] for j in range(n)]
    colour = [0] * n
    for root in range(n):
        if colour[root]:
            continue
        stack = [(root, iter(succ[root]))]
        colour[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = 2
                stack.pop()
            elif colour[nxt] == 1:
                return True
            elif colour[nxt] == 0:
                colour[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
    return False
