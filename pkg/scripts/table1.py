"""Print the Duffing C_S table: exact-series prediction against refitted published slopes."""
from slowfast_escape.analysis import render_table1, table1

if __name__ == "__main__":
    print(render_table1(table1()))
