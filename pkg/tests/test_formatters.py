"""Tests for the table formatter."""

from __future__ import annotations

from unittest.mock import MagicMock, patch

from mapu_lab.formatters import table


class TestRenderRichTable:
    def test_prints_one_table(self):
        with patch("mapu_lab.formatters.table.Console") as mock_console_class:
            mock_console = MagicMock()
            mock_console_class.return_value = mock_console

            table.render_rich_table([{"a": 1, "b": 0.5}], ["a", "b"], title="T", color=False)

            mock_console_class.assert_called_once_with(no_color=True)
            rendered = mock_console.print.call_args[0][0]
            assert rendered.__class__.__name__ == "Table"
            assert rendered.row_count == 1
            assert [c.header for c in rendered.columns] == ["A", "B"]


class TestAggregate:
    """mean ± std cells."""

    def test_mean_std_scales_to_percent(self):
        assert table.mean_std(0.87312, 0.012) == "87.31 ± 1.20"
        assert table.mean_std(2.5, 0.25, scale=1.0) == "2.50 ± 0.25"

    def test_aggregate_rows(self):
        aggregate = {
            "mapu": {"runs": 3, "macro_f1": {"mean": 0.8, "std": 0.01}},
            "emapu": {"runs": 3, "macro_f1": {"mean": 0.85, "std": 0.02}},
        }
        rows = table.aggregate_rows(aggregate, ["macro_f1"])
        assert rows == [
            {"variant": "mapu", "runs": 3, "macro_f1": "80.00 ± 1.00"},
            {"variant": "emapu", "runs": 3, "macro_f1": "85.00 ± 2.00"},
        ]
