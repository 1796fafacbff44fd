"""
Сервисы библиотеки дискретных β-ансамблей.
"""
