# Файлові артефакти (JSON / CSV)
