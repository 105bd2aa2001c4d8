# Збереження звітів та реєстр запусків
