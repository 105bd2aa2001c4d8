# Реєстр запусків (SQLite через SQLModel)
