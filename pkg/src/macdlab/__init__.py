"""MACD-family trading strategy backtester.

Indicators, signal rules, a next-bar execution simulator, performance
metrics and a genetic-algorithm parameter search for daily OHLCV data.
"""

__version__ = "0.1.0"
